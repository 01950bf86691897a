use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::mann_whitney_auc;

use super::LearnerConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub n: usize,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    /// Absent when no positive sample is present.
    pub sensitivity: Option<f64>,
    /// Absent when no negative sample is present.
    pub specificity: Option<f64>,
    /// Absent unless both classes are present.
    pub auc: Option<f64>,
}

/// Accuracy, sensitivity, specificity and Mann-Whitney AUC of `scores`.
pub fn classification_report(labels: &[bool], predictions: &[bool], scores: &[f64]) -> Result<ClassificationMetrics> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    if labels.len() != predictions.len() || labels.len() != scores.len() {
        return Err(Error::Validation(vec![format!(
            "{} labels, {} predictions, {} scores",
            labels.len(),
            predictions.len(),
            scores.len()
        )]));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&l, &p) in labels.iter().zip(predictions) {
        match (l, p) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    let pos: Vec<f64> = labels.iter().zip(scores).filter(|(l, _)| **l).map(|(_, &s)| s).collect();
    let neg: Vec<f64> = labels.iter().zip(scores).filter(|(l, _)| !**l).map(|(_, &s)| s).collect();
    Ok(ClassificationMetrics {
        n: labels.len(),
        tp,
        tn,
        fp,
        fn_,
        accuracy: (tp + tn) as f64 / labels.len() as f64,
        sensitivity: ratio(tp, fn_),
        specificity: ratio(tn, fp),
        auc: (!pos.is_empty() && !neg.is_empty()).then(|| mann_whitney_auc(&pos, &neg)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: ClassificationMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub fold: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldOutPrediction {
    pub sample_id: String,
    pub fold: usize,
    pub label: bool,
    pub predicted: bool,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub protocol: String,
    pub seed: u64,
    pub learner: LearnerConfig,
    pub class_names: Vec<String>,
    pub positive_class: String,
    pub n_rows: usize,
    pub n_features: usize,
    pub folds: Vec<FoldReport>,
    pub skipped_folds: Vec<SkippedFold>,
    /// Training rows whose shuffle pools drew on a held-out group, summed
    /// over folds. Zero means no test fixation shaped any training feature.
    pub shuffle_leakage: usize,
    pub pooled: ClassificationMetrics,
    pub predictions: Vec<HeldOutPrediction>,
}

impl CvReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", 100.0 * x))
}

/// Pooled statistics as percentages with two decimals.
pub fn format_table(r: &CvReport) -> String {
    let p = &r.pooled;
    let mut out = String::new();
    out.push_str(&format!(
        "protocol {} | learner {} | {} rows x {} features | {} folds ({} skipped)\n",
        r.protocol,
        r.learner.kind(),
        r.n_rows,
        r.n_features,
        r.folds.len(),
        r.skipped_folds.len()
    ));
    out.push_str(&format!("{:<12}{:>10}{:>13}{:>13}{:>9}\n", "positive", "Accuracy", "Sensitivity", "Specificity", "AUC"));
    out.push_str(&format!(
        "{:<12}{:>10}{:>13}{:>13}{:>9}\n",
        r.positive_class,
        pct(Some(p.accuracy)),
        pct(p.sensitivity),
        pct(p.specificity),
        pct(p.auc)
    ));
    out
}
