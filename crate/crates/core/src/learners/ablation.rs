//! Accuracy as a function of how many saliency models feed the features.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::seed::derive_rng;

use super::{cross_validate, LearnerConfig, ProtocolSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub size: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std_accuracy: f64,
    pub accuracies: Vec<f64>,
    pub subsets: Vec<Vec<String>>,
}

/// For each size, draws `repeats` random model subsets (independently, in
/// registry order) and scores each with `eval`. The full size has exactly
/// one subset and is evaluated once.
pub fn ablation_sweep<F>(model_ids: &[String], sizes: &[usize], repeats: usize, seed: u64, eval: F) -> Result<Vec<AblationRow>>
where
    F: Fn(&[String]) -> Result<f64>,
{
    let t = model_ids.len();
    if repeats == 0 {
        return Err(Error::Config("ablation repeats must be at least 1".into()));
    }
    if let Some(&bad) = sizes.iter().find(|&&k| k == 0 || k > t) {
        return Err(Error::Config(format!("ablation subset size {bad} outside 1..={t}")));
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &k in sizes {
        let mut rng = derive_rng(seed, &["ablation", &k.to_string()]);
        let runs = if k == t { 1 } else { repeats };
        let mut subsets = Vec::with_capacity(runs);
        let mut accuracies = Vec::with_capacity(runs);
        for _ in 0..runs {
            let mut idx = sample(&mut rng, t, k).into_vec();
            idx.sort_unstable();
            let subset: Vec<String> = idx.into_iter().map(|i| model_ids[i].clone()).collect();
            accuracies.push(eval(&subset)?);
            subsets.push(subset);
        }
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = if accuracies.len() > 1 {
            (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        out.push(AblationRow {
            size: k,
            mean_accuracy: mean,
            std_accuracy: std,
            accuracies,
            subsets,
        });
    }
    Ok(out)
}

/// Sweep over column slices of a full-feature matrix, each subset scored by
/// pooled cross-validated accuracy under `seed`.
pub fn ablation_sweep_matrix(
    matrix: &DesignMatrix,
    sizes: &[usize],
    repeats: usize,
    spec: &ProtocolSpec,
    learner: &LearnerConfig,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    ablation_sweep(&matrix.layout.model_ids(), sizes, repeats, seed, |models| {
        let m = matrix.select_models(models)?;
        Ok(cross_validate(&m, spec, learner, seed)?.pooled.accuracy)
    })
}
