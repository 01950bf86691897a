//! Cross-validation protocols.
//!
//! Folds are built over row groups (subjects in subject mode, image files in
//! task mode) so related rows never straddle a train/test boundary.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::gaze::{ClassificationMode, SubjectEntry};
use crate::seed::derive_rng;

use super::report::{FoldReport, HeldOutPrediction, SkippedFold};
use super::{classification_report, train, CvReport, LearnerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// One fold per row.
    LeaveOneOut,
    /// Group-aware k-fold with a seeded assignment.
    #[serde(rename = "kfold")]
    KFold,
    /// Subject mode: one fold per subject.
    LeaveOneSubjectOut,
    /// Task mode: one fold per image.
    LeaveOneImageOut,
    /// Task mode: train on a seeded half of the images, test on the rest.
    HalfImages,
    /// Task mode: features of half the subjects train, the other half test.
    HalfSubjects,
}

impl Protocol {
    pub fn id(self) -> &'static str {
        match self {
            Protocol::LeaveOneOut => "leave-one-out",
            Protocol::KFold => "kfold",
            Protocol::LeaveOneSubjectOut => "leave-one-subject-out",
            Protocol::LeaveOneImageOut => "leave-one-image-out",
            Protocol::HalfImages => "half-images",
            Protocol::HalfSubjects => "half-subjects",
        }
    }

    pub fn parse(s: &str) -> Option<Protocol> {
        [
            Protocol::LeaveOneOut,
            Protocol::KFold,
            Protocol::LeaveOneSubjectOut,
            Protocol::LeaveOneImageOut,
            Protocol::HalfImages,
            Protocol::HalfSubjects,
        ]
        .into_iter()
        .find(|p| p.id() == s)
    }

    pub fn check_mode(self, mode: ClassificationMode) -> Result<()> {
        let ok = match self {
            Protocol::LeaveOneOut | Protocol::KFold => true,
            Protocol::LeaveOneSubjectOut => mode == ClassificationMode::Subject,
            Protocol::LeaveOneImageOut | Protocol::HalfImages | Protocol::HalfSubjects => {
                mode == ClassificationMode::Task
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Protocol(format!("protocol `{}` does not apply to {mode} mode", self.id())))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSpec {
    pub id: Protocol,
    /// Number of folds for `kfold`.
    pub folds: usize,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            id: Protocol::LeaveOneSubjectOut,
            folds: 10,
        }
    }
}

impl ProtocolSpec {
    pub fn new(id: Protocol) -> Self {
        ProtocolSpec { id, ..ProtocolSpec::default() }
    }

    /// Protocol id as reported, including the fold count for k-fold.
    pub fn label(&self) -> String {
        match self.id {
            Protocol::KFold => format!("{}-fold", self.folds),
            p => p.id().to_string(),
        }
    }
}

/// Row indices of every group, groups in sorted order.
fn groups(matrix: &DesignMatrix) -> Vec<Vec<usize>> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in matrix.rows.iter().enumerate() {
        map.entry(&r.group).or_default().push(i);
    }
    map.into_values().collect()
}

/// Group indices (into the sorted group list) of every fold, for the
/// group-level protocols.
fn group_folds(n_groups: usize, spec: &ProtocolSpec, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = derive_rng(seed, &["cv", spec.id.id()]);
    Ok(match spec.id {
        Protocol::LeaveOneOut | Protocol::LeaveOneSubjectOut | Protocol::LeaveOneImageOut => {
            (0..n_groups).map(|g| vec![g]).collect()
        }
        Protocol::KFold => {
            let k = spec.folds;
            if k < 2 || k > n_groups {
                return Err(Error::Protocol(format!("{k}-fold needs between 2 and {n_groups} groups")));
            }
            let mut order: Vec<usize> = (0..n_groups).collect();
            order.shuffle(&mut rng);
            let mut folds = vec![Vec::new(); k];
            for (pos, &g) in order.iter().enumerate() {
                folds[pos % k].push(g);
            }
            folds
        }
        Protocol::HalfImages => {
            if n_groups < 2 {
                return Err(Error::Protocol("half-images needs at least two images".into()));
            }
            let mut order: Vec<usize> = (0..n_groups).collect();
            order.shuffle(&mut rng);
            vec![order[n_groups / 2..].to_vec()]
        }
        Protocol::HalfSubjects => {
            return Err(Error::Protocol(
                "half-subjects evaluates separate train and test matrices; use cross_validate_split".into(),
            ))
        }
    })
}

/// Test-row indices of every fold.
pub fn make_folds(matrix: &DesignMatrix, spec: &ProtocolSpec, seed: u64) -> Result<Vec<Vec<usize>>> {
    spec.id.check_mode(matrix.mode)?;
    if spec.id == Protocol::LeaveOneOut {
        return Ok((0..matrix.rows.len()).map(|i| vec![i]).collect());
    }
    let groups = groups(matrix);
    let folds = group_folds(groups.len(), spec, seed)?;
    Ok(folds
        .into_iter()
        .map(|gs| {
            let mut rows: Vec<usize> = gs.iter().flat_map(|&g| groups[g].iter().copied()).collect();
            rows.sort_unstable();
            rows
        })
        .collect())
}

/// Task-mode shuffle-pool partition matching the folds `make_folds` builds
/// over the same groups: group name to fold index, with the training half of
/// `half-images` as one extra partition. `None` where no partition can keep
/// pools non-empty (one group per fold) or the protocol splits below the
/// group level.
pub fn pool_partition(
    mode: ClassificationMode,
    groups: &BTreeSet<String>,
    spec: &ProtocolSpec,
    seed: u64,
) -> Result<Option<BTreeMap<String, usize>>> {
    spec.id.check_mode(mode)?;
    if !matches!(spec.id, Protocol::KFold | Protocol::HalfImages) {
        return Ok(None);
    }
    let folds = group_folds(groups.len(), spec, seed)?;
    let names: Vec<&String> = groups.iter().collect();
    let mut out: BTreeMap<String, usize> = names.iter().map(|g| (g.to_string(), folds.len())).collect();
    for (k, gs) in folds.iter().enumerate() {
        for &g in gs {
            out.insert(names[g].clone(), k);
        }
    }
    Ok(Some(out))
}

/// Seeded split of subjects into two halves, balanced within each class.
pub fn split_subjects(subjects: &[SubjectEntry], seed: u64) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in subjects {
        by_class.entry(&s.label).or_default().push(&s.id);
    }
    let mut rng = derive_rng(seed, &["cv", Protocol::HalfSubjects.id()]);
    let (mut a, mut b) = (BTreeSet::new(), BTreeSet::new());
    for ids in by_class.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let half = ids.len().div_ceil(2);
        a.extend(ids[..half].iter().map(|s| s.to_string()));
        b.extend(ids[half..].iter().map(|s| s.to_string()));
    }
    (a, b)
}

struct FoldOutcome {
    fold: usize,
    n_train: usize,
    result: std::result::Result<Vec<HeldOutPrediction>, String>,
    leakage: usize,
}

fn run_fold(
    fold: usize,
    train_m: &DesignMatrix,
    train_idx: &[usize],
    test_m: &DesignMatrix,
    test_idx: &[usize],
    learner: &LearnerConfig,
) -> Result<FoldOutcome> {
    let train_labels = train_m.binary_labels()?;
    let test_labels = test_m.binary_labels()?;
    let x: Vec<Vec<f64>> = train_idx.iter().map(|&i| train_m.rows[i].values.clone()).collect();
    let y: Vec<bool> = train_idx.iter().map(|&i| train_labels[i]).collect();
    let test_groups: BTreeSet<&str> = test_idx.iter().map(|&i| test_m.rows[i].group.as_str()).collect();
    let leakage = train_idx
        .iter()
        .filter(|&&i| train_m.rows[i].pool_groups.iter().any(|g| test_groups.contains(g.as_str())))
        .count();
    let result = match train(&x, &y, learner) {
        Ok(model) => {
            let mut preds = Vec::with_capacity(test_idx.len());
            for &i in test_idx {
                let p = model.predict(&test_m.rows[i].values)?;
                preds.push(HeldOutPrediction {
                    sample_id: test_m.rows[i].sample_id.clone(),
                    fold,
                    label: test_labels[i],
                    predicted: p.label,
                    score: p.score,
                });
            }
            Ok(preds)
        }
        Err(e @ Error::DegenerateLabel(_)) => Err(e.to_string()),
        Err(e) => return Err(e),
    };
    Ok(FoldOutcome {
        fold,
        n_train: train_idx.len(),
        result,
        leakage,
    })
}

fn assemble(
    spec_label: String,
    seed: u64,
    learner: &LearnerConfig,
    reference: &DesignMatrix,
    n_rows: usize,
    outcomes: Vec<FoldOutcome>,
) -> Result<CvReport> {
    let mut folds = Vec::new();
    let mut skipped = Vec::new();
    let mut predictions = Vec::new();
    let mut leakage = 0;
    for o in outcomes {
        leakage += o.leakage;
        match o.result {
            Ok(preds) => {
                let m = classification_report(
                    &preds.iter().map(|p| p.label).collect::<Vec<_>>(),
                    &preds.iter().map(|p| p.predicted).collect::<Vec<_>>(),
                    &preds.iter().map(|p| p.score).collect::<Vec<_>>(),
                )?;
                folds.push(FoldReport {
                    fold: o.fold,
                    n_train: o.n_train,
                    n_test: preds.len(),
                    metrics: m,
                });
                predictions.extend(preds);
            }
            Err(reason) => {
                log::warn!("fold {} skipped: {reason}", o.fold);
                skipped.push(SkippedFold { fold: o.fold, reason });
            }
        }
    }
    if predictions.is_empty() {
        return Err(Error::Protocol("every fold was skipped".into()));
    }
    let pooled = classification_report(
        &predictions.iter().map(|p| p.label).collect::<Vec<_>>(),
        &predictions.iter().map(|p| p.predicted).collect::<Vec<_>>(),
        &predictions.iter().map(|p| p.score).collect::<Vec<_>>(),
    )?;
    Ok(CvReport {
        protocol: spec_label,
        seed,
        learner: learner.clone(),
        class_names: reference.class_names.clone(),
        positive_class: reference.positive_class.clone(),
        n_rows,
        n_features: reference.n_features(),
        folds,
        skipped_folds: skipped,
        shuffle_leakage: leakage,
        pooled,
        predictions,
    })
}

/// Runs `spec` on `matrix`; held-out predictions are pooled across folds.
/// Folds run concurrently and are merged in fold order.
pub fn cross_validate(matrix: &DesignMatrix, spec: &ProtocolSpec, learner: &LearnerConfig, seed: u64) -> Result<CvReport> {
    learner.validate()?;
    let folds = make_folds(matrix, spec, seed)?;
    let outcomes = folds
        .par_iter()
        .enumerate()
        .map(|(k, test)| {
            let held: BTreeSet<usize> = test.iter().copied().collect();
            let train_idx: Vec<usize> = (0..matrix.rows.len()).filter(|i| !held.contains(i)).collect();
            run_fold(k, matrix, &train_idx, matrix, test, learner)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(spec.label(), seed, learner, matrix, matrix.rows.len(), outcomes)
}

/// Trains on every row of `train_m` and tests on every row of `test_m`, as
/// the half-subjects protocol requires.
pub fn cross_validate_split(
    train_m: &DesignMatrix,
    test_m: &DesignMatrix,
    protocol: Protocol,
    learner: &LearnerConfig,
    seed: u64,
) -> Result<CvReport> {
    learner.validate()?;
    protocol.check_mode(train_m.mode)?;
    if train_m.layout != test_m.layout || train_m.class_names != test_m.class_names {
        return Err(Error::Layout("train and test matrices differ in layout or classes".into()));
    }
    let train_idx: Vec<usize> = (0..train_m.rows.len()).collect();
    let test_idx: Vec<usize> = (0..test_m.rows.len()).collect();
    let mut outcome = run_fold(0, train_m, &train_idx, test_m, &test_idx, learner)?;
    // Both halves share images by design; leakage is about subjects here.
    let train_subjects: BTreeSet<&String> = train_m.provenance.subjects.iter().flatten().collect();
    outcome.leakage = test_m
        .provenance
        .subjects
        .iter()
        .flatten()
        .filter(|s| train_subjects.contains(s))
        .count();
    assemble(
        protocol.id().to_string(),
        seed,
        learner,
        train_m,
        train_m.rows.len() + test_m.rows.len(),
        vec![outcome],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureLayout, LabeledSample, MatrixProvenance};
    use crate::learners::{GbtConfig, SvmConfig};
    use crate::metrics::MetricId;

    fn matrix(mode: ClassificationMode, n_groups: usize, per_group: usize) -> DesignMatrix {
        let mut rows = Vec::new();
        for g in 0..n_groups {
            for k in 0..per_group {
                let label = (g + k) % 2;
                let v = if label == 1 { 1.0 } else { -1.0 };
                rows.push(LabeledSample {
                    sample_id: format!("r{g:03}-{k}"),
                    label,
                    group: format!("g{g:03}"),
                    pool_groups: vec![format!("g{:03}", (g + 1) % n_groups)],
                    values: vec![v + 0.01 * g as f64, 0.3 * k as f64],
                });
            }
        }
        DesignMatrix {
            mode,
            class_names: vec!["A".into(), "B".into()],
            positive_class: "A".into(),
            layout: FeatureLayout::new(&["m"], &[MetricId::Nss, MetricId::Cc]),
            rows,
            provenance: MatrixProvenance {
                seed: 0,
                registry_hash: String::new(),
                metric_config_hash: String::new(),
                skipped_trials: 0,
                excluded: vec![],
                degenerate_features: 0,
                subjects: None,
            },
        }
    }

    #[test]
    fn fold_shapes() {
        let m = matrix(ClassificationMode::Subject, 12, 1);
        let loo = make_folds(&m, &ProtocolSpec::new(Protocol::LeaveOneOut), 1).unwrap();
        assert_eq!(loo.len(), 12);
        assert!(loo.iter().all(|f| f.len() == 1));

        let t = matrix(ClassificationMode::Task, 300, 2);
        let k10 = make_folds(&t, &ProtocolSpec { id: Protocol::KFold, folds: 10 }, 1).unwrap();
        assert_eq!(k10.len(), 10);
        assert!(k10.iter().all(|f| f.len() == 60));
        let mut all: Vec<usize> = k10.concat();
        all.sort_unstable();
        assert_eq!(all, (0..600).collect::<Vec<_>>());
        // Groups never straddle folds.
        for f in &k10 {
            let gs: BTreeSet<&str> = f.iter().map(|&i| t.rows[i].group.as_str()).collect();
            assert_eq!(gs.len() * 2, f.len());
        }
    }

    #[test]
    fn half_images_partition() {
        let t = matrix(ClassificationMode::Task, 800, 1);
        let f = make_folds(&t, &ProtocolSpec::new(Protocol::HalfImages), 3).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].len(), 400);
        assert_eq!(f, make_folds(&t, &ProtocolSpec::new(Protocol::HalfImages), 3).unwrap());
        assert_ne!(f, make_folds(&t, &ProtocolSpec::new(Protocol::HalfImages), 4).unwrap());
    }

    #[test]
    fn pool_partition_matches_folds() {
        let t = matrix(ClassificationMode::Task, 30, 2);
        let names: BTreeSet<String> = t.rows.iter().map(|r| r.group.clone()).collect();
        for spec in [ProtocolSpec { id: Protocol::KFold, folds: 4 }, ProtocolSpec::new(Protocol::HalfImages)] {
            let part = pool_partition(t.mode, &names, &spec, 9).unwrap().unwrap();
            for (k, fold) in make_folds(&t, &spec, 9).unwrap().iter().enumerate() {
                assert!(fold.iter().all(|&i| part[&t.rows[i].group] == k));
            }
        }
        let loio = ProtocolSpec::new(Protocol::LeaveOneImageOut);
        assert_eq!(pool_partition(t.mode, &names, &loio, 9).unwrap(), None);
    }

    #[test]
    fn protocol_mode_mismatch() {
        let s = matrix(ClassificationMode::Subject, 6, 1);
        let e = cross_validate(&s, &ProtocolSpec::new(Protocol::LeaveOneImageOut), &LearnerConfig::default(), 0);
        assert!(matches!(e, Err(Error::Protocol(_))));
        let t = matrix(ClassificationMode::Task, 6, 1);
        assert!(make_folds(&t, &ProtocolSpec::new(Protocol::LeaveOneSubjectOut), 0).is_err());
        assert!(make_folds(&t, &ProtocolSpec::new(Protocol::HalfSubjects), 0).is_err());
        assert!(make_folds(&t, &ProtocolSpec { id: Protocol::KFold, folds: 7 }, 0).is_err());
    }

    #[test]
    fn separable_matrix_scores_perfectly_and_reports_leakage() {
        let t = matrix(ClassificationMode::Task, 20, 2);
        for learner in [LearnerConfig::Svm(SvmConfig::default()), LearnerConfig::Gbt(GbtConfig::default())] {
            let r = cross_validate(&t, &ProtocolSpec::new(Protocol::LeaveOneImageOut), &learner, 5).unwrap();
            assert_eq!(r.folds.len(), 20);
            assert_eq!(r.pooled.n, 40);
            assert_eq!(r.pooled.accuracy, 1.0, "{}", learner.kind());
            // Each held-out group feeds exactly one other group's pools.
            assert_eq!(r.shuffle_leakage, 20 * 2);
            assert_eq!(r, cross_validate(&t, &ProtocolSpec::new(Protocol::LeaveOneImageOut), &learner, 5).unwrap());
        }
    }

    #[test]
    fn single_class_training_fold_is_skipped() {
        let mut m = matrix(ClassificationMode::Subject, 3, 1);
        // Labels A, B, A: holding out the only B leaves a single class.
        m.rows[1].label = 1;
        m.rows[0].label = 0;
        m.rows[2].label = 0;
        let r = cross_validate(&m, &ProtocolSpec::new(Protocol::LeaveOneOut), &LearnerConfig::default(), 0).unwrap();
        assert_eq!(r.skipped_folds.len(), 1);
        assert_eq!(r.skipped_folds[0].fold, 1);
        assert_eq!(r.pooled.n, 2);
    }

    #[test]
    fn subject_split_is_balanced_and_disjoint() {
        let subjects: Vec<SubjectEntry> = (0..10)
            .map(|i| SubjectEntry { id: format!("s{i}"), label: if i < 6 { "A" } else { "B" }.into() })
            .collect();
        let (a, b) = split_subjects(&subjects, 8);
        assert_eq!(a.len() + b.len(), 10);
        assert!(a.is_disjoint(&b));
        assert_eq!(a.iter().filter(|s| s[1..].parse::<usize>().unwrap() < 6).count(), 3);
        assert_eq!((a.clone(), b.clone()), split_subjects(&subjects, 8));
    }
}
