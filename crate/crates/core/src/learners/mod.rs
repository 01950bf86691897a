//! Binary classifiers, evaluation statistics and cross-validation.

pub mod ablation;
pub mod cv;
pub mod gbt;
pub mod report;
pub mod svm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DesignMatrix, FeatureVector};

pub use ablation::{ablation_sweep, ablation_sweep_matrix, AblationRow};
pub use cv::{cross_validate, cross_validate_split, make_folds, pool_partition, split_subjects, Protocol, ProtocolSpec};
pub use gbt::{GbtConfig, GbtModel};
pub use report::{classification_report, format_table, ClassificationMetrics, CvReport};
pub use svm::{ClassWeight, SvmConfig, SvmModel};

/// Per-dimension z-scoring fitted on training rows. A dimension with zero
/// spread keeps unit scale so it maps to a constant 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for row in x {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2) / n;
            }
        }
        let std = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Scaler { mean, std }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerConfig {
    Svm(SvmConfig),
    Gbt(GbtConfig),
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig::Svm(SvmConfig::default())
    }
}

impl LearnerConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            LearnerConfig::Svm(_) => "svm",
            LearnerConfig::Gbt(_) => "gbt",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerConfig::Svm(c) => c.validate(),
            LearnerConfig::Gbt(c) => c.validate(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub label: bool,
    /// Larger means more confidently positive.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Svm(SvmModel),
    Gbt(GbtModel),
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Svm(m) => m.scaler.mean.len(),
            TrainedModel::Gbt(m) => m.scaler.mean.len(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.n_features() {
            return Err(Error::Layout(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        Ok(match self {
            TrainedModel::Svm(m) => m.predict(x),
            TrainedModel::Gbt(m) => m.predict(x),
        })
    }

    /// Like [`TrainedModel::predict`], also checking column names.
    pub fn predict_feature(&self, f: &FeatureVector, columns: &[String]) -> Result<Prediction> {
        if f.layout.column_names() != columns {
            return Err(Error::Layout("feature layout differs from the training layout".into()));
        }
        self.predict(&f.values)
    }
}

/// Shared input checks: rectangular, finite, both classes present.
pub(crate) fn check_training(x: &[Vec<f64>], y: &[bool]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::EmptyInput("training rows"));
    }
    if x.len() != y.len() {
        return Err(Error::Validation(vec![format!("{} rows but {} labels", x.len(), y.len())]));
    }
    let d = x[0].len();
    let mut errs = Vec::new();
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            errs.push(format!("row {i} has {} features, expected {d}", row.len()));
        } else if row.iter().any(|v| !v.is_finite()) {
            errs.push(format!("row {i} has a non-finite feature"));
        }
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::DegenerateLabel("training labels contain a single class".into()));
    }
    Ok(d)
}

/// Trains the configured learner. Both learners are deterministic.
pub fn train(x: &[Vec<f64>], y: &[bool], cfg: &LearnerConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    Ok(match cfg {
        LearnerConfig::Svm(c) => TrainedModel::Svm(svm::svm_train(x, y, c)?),
        LearnerConfig::Gbt(c) => TrainedModel::Gbt(gbt::gbt_train(x, y, c)?),
    })
}

/// Trains on every row of `matrix`.
pub fn train_matrix(matrix: &DesignMatrix, cfg: &LearnerConfig) -> Result<TrainedModel> {
    let x: Vec<Vec<f64>> = matrix.rows.iter().map(|r| r.values.clone()).collect();
    train(&x, &matrix.binary_labels()?, cfg)
}
