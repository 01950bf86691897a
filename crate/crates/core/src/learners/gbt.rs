//! Gradient-boosted regression trees on the logistic loss.
//!
//! Each stage fits a depth-limited tree to the loss gradients with exact
//! greedy splits, sets leaf values by a Newton step `-sum(g) / sum(h)`, and
//! adds the tree scaled by the learning rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{check_training, Prediction, Scaler};

/// Children lighter than this carry too little curvature for a stable
/// Newton step.
const MIN_CHILD_HESSIAN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_estimators: 100,
            max_depth: 3,
            learning_rate: 0.1,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 || self.max_depth == 0 {
            return Err(Error::Config("gbt n_estimators and max_depth must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("gbt learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Node::Leaf(v) => *v,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.eval(x)
                } else {
                    right.eval(x)
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub scaler: Scaler,
    /// Prior log-odds.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Node>,
    /// Mean training log-loss before the first stage and after each stage.
    pub train_loss: Vec<f64>,
}

fn sigmoid(f: f64) -> f64 {
    1.0 / (1.0 + (-f).exp())
}

fn log_loss(f: &[f64], y: &[bool]) -> f64 {
    // ln(1 + e^-m) for margin m = +-f, computed stably.
    let softplus = |m: f64| if m > 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() };
    f.iter()
        .zip(y)
        .map(|(&v, &l)| softplus(if l { v } else { -v }))
        .sum::<f64>()
        / f.len() as f64
}

impl GbtModel {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        let z = self.scaler.transform(x);
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.eval(&z)).sum::<f64>()
    }

    /// Score is the positive-class probability.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let score = sigmoid(self.raw_score(x));
        Prediction { label: score > 0.5, score }
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn best_split(x: &[Vec<f64>], g: &[f64], h: &[f64], rows: &[usize]) -> Option<BestSplit> {
    let (gt, ht): (f64, f64) = rows.iter().fold((0.0, 0.0), |(a, b), &i| (a + g[i], b + h[i]));
    let parent = gt * gt / ht;
    let mut best: Option<BestSplit> = None;
    let mut sorted = rows.to_vec();
    for f in 0..x[0].len() {
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let (mut gl, mut hl) = (0.0, 0.0);
        for w in 0..sorted.len() - 1 {
            let i = sorted[w];
            gl += g[i];
            hl += h[i];
            let (v, next) = (x[i][f], x[sorted[w + 1]][f]);
            if v == next {
                continue;
            }
            let (gr, hr) = (gt - gl, ht - hl);
            if hl < MIN_CHILD_HESSIAN || hr < MIN_CHILD_HESSIAN {
                continue;
            }
            let gain = gl * gl / hl + gr * gr / hr - parent;
            if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(BestSplit {
                    feature: f,
                    threshold: v + (next - v) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

fn build_tree(x: &[Vec<f64>], g: &[f64], h: &[f64], rows: &[usize], depth: usize) -> Node {
    let leaf = || {
        let (gs, hs): (f64, f64) = rows.iter().fold((0.0, 0.0), |(a, b), &i| (a + g[i], b + h[i]));
        Node::Leaf(-gs / hs.max(MIN_CHILD_HESSIAN))
    };
    if depth == 0 || rows.len() < 2 {
        return leaf();
    }
    match best_split(x, g, h, rows) {
        None => leaf(),
        Some(s) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][s.feature] <= s.threshold);
            Node::Split {
                feature: s.feature,
                threshold: s.threshold,
                left: Box::new(build_tree(x, g, h, &l, depth - 1)),
                right: Box::new(build_tree(x, g, h, &r, depth - 1)),
            }
        }
    }
}

pub fn gbt_train(x: &[Vec<f64>], y: &[bool], cfg: &GbtConfig) -> Result<GbtModel> {
    cfg.validate()?;
    check_training(x, y)?;
    let scaler = Scaler::fit(x);
    let z: Vec<Vec<f64>> = x.iter().map(|r| scaler.transform(r)).collect();
    let n = y.len();
    let p = y.iter().filter(|&&v| v).count() as f64 / n as f64;
    let base_score = (p / (1.0 - p)).ln();
    let mut f = vec![base_score; n];
    let rows: Vec<usize> = (0..n).collect();
    let mut trees = Vec::with_capacity(cfg.n_estimators);
    let mut train_loss = vec![log_loss(&f, y)];
    let (mut g, mut h) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..cfg.n_estimators {
        for i in 0..n {
            let pi = sigmoid(f[i]);
            g[i] = pi - if y[i] { 1.0 } else { 0.0 };
            h[i] = pi * (1.0 - pi);
        }
        let tree = build_tree(&z, &g, &h, &rows, cfg.max_depth);
        for i in 0..n {
            f[i] += cfg.learning_rate * tree.eval(&z[i]);
        }
        train_loss.push(log_loss(&f, y));
        trees.push(tree);
    }
    Ok(GbtModel {
        scaler,
        base_score,
        learning_rate: cfg.learning_rate,
        trees,
        train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::report::classification_report;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn noisy(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = rng_from_seed(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = i % 3 != 0;
            let row: Vec<f64> = (0..d)
                .map(|j| rng.random_range(-1.0..1.0) + if label && j == 0 { 0.7 } else { 0.0 })
                .collect();
            x.push(row);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn loss_never_increases() {
        for seed in 0..5 {
            let (x, y) = noisy(60, 4, seed);
            let m = gbt_train(&x, &y, &GbtConfig::default()).unwrap();
            assert_eq!(m.train_loss.len(), 101);
            for w in m.train_loss.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn loss_monotone_on_random_data(seed in 0u64..10_000, n in 6usize..40, d in 1usize..4) {
            let (x, y) = noisy(n, d, seed);
            let m = gbt_train(&x, &y, &GbtConfig { n_estimators: 30, ..GbtConfig::default() }).unwrap();
            for w in m.train_loss.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn stump_recovers_threshold() {
        let x: Vec<Vec<f64>> = [0.3, 1.1, 2.0, 2.4, 3.9, 4.2, 5.0, 6.5].iter().map(|&v| vec![v]).collect();
        let y = vec![false, false, false, false, true, true, true, true];
        let m = gbt_train(&x, &y, &GbtConfig { n_estimators: 1, max_depth: 1, learning_rate: 0.1 }).unwrap();
        // Oracle: exhaustive scan of midpoints for the split that separates
        // the labels, expressed in the model's scaled units.
        let mut oracle = None;
        for w in 0..x.len() - 1 {
            let t = (x[w][0] + x[w + 1][0]) / 2.0;
            if x.iter().zip(&y).all(|(r, &l)| (r[0] > t) == l) {
                oracle = Some(t);
            }
        }
        let t = oracle.unwrap();
        match &m.trees[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                let raw = threshold * m.scaler.std[0] + m.scaler.mean[0];
                assert!((raw - t).abs() < 1e-9, "{raw} vs {t}");
            }
            other => panic!("expected a split, got {other:?}"),
        }
        for (r, &l) in x.iter().zip(&y) {
            assert_eq!(m.predict(r).label, l);
        }
    }

    #[test]
    fn constant_features_predict_prior() {
        let x = vec![vec![1.0, 2.0]; 10];
        let y: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let m = gbt_train(&x, &y, &GbtConfig::default()).unwrap();
        let preds: Vec<_> = x.iter().map(|r| m.predict(r)).collect();
        assert!(preds.iter().all(|p| (p.score - 0.3).abs() < 1e-12));
        let r = classification_report(
            &y,
            &preds.iter().map(|p| p.label).collect::<Vec<_>>(),
            &preds.iter().map(|p| p.score).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(r.auc, Some(0.5));
    }

    #[test]
    fn invariant_to_monotone_transforms() {
        let (x, y) = noisy(50, 3, 4);
        let t = |v: f64| v.exp() * 3.0 + 1.0;
        let xt: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|&v| t(v)).collect()).collect();
        let a = gbt_train(&x, &y, &GbtConfig::default()).unwrap();
        let b = gbt_train(&xt, &y, &GbtConfig::default()).unwrap();
        // Split thresholds are midpoints, so rank invariance holds exactly at
        // the training points.
        for r in &x {
            let rt: Vec<f64> = r.iter().map(|&v| t(v)).collect();
            assert_eq!(a.predict(r).label, b.predict(&rt).label);
        }
    }
}
