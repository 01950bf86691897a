//! Kernel SVM trained by sequential minimal optimization with second-order
//! working-set selection.
//!
//! The dual is `min 1/2 a'Qa - e'a` subject to `0 <= a <= C` and `y'a = 0`,
//! with `Q_ij = y_i y_j K(x_i, x_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{check_training, Prediction, Scaler};

const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub degree: u32,
    /// `None` means `1 / d`.
    pub gamma: Option<f64>,
    pub coef0: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub class_weight: ClassWeight,
}

/// Per-class scaling of `C`.
///
/// Balanced is the default: with a single `C`, leave-one-out style folds
/// always hold one extra sample of the class opposite to the test sample,
/// and a strongly regularized SVM follows that imbalance, predicting the
/// wrong class for every held-out sample of structureless data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    /// The same `C` for both classes.
    None,
    /// `C * n / (2 n_class)`, so each class carries equal total weight.
    #[default]
    Balanced,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 0.01,
            degree: 3,
            gamma: None,
            coef0: 1.0,
            tolerance: 1e-3,
            max_iterations: 1_000_000,
            class_weight: ClassWeight::Balanced,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::Config(format!("svm C must be positive, got {}", self.c)));
        }
        if self.degree < 1 {
            return Err(Error::Config("svm degree must be at least 1".into()));
        }
        if self.gamma.is_some_and(|g| !(g > 0.0)) {
            return Err(Error::Config("svm gamma must be positive".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config("svm tolerance and max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyKernel {
    pub gamma: f64,
    pub coef0: f64,
    pub degree: u32,
}

impl PolyKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        (self.gamma * dot + self.coef0).powi(self.degree as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision function is `sum_i alpha_i y_i K(x_i, x) - rho`.
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the dual for a precomputed kernel matrix with box bounds
/// `0 <= a_i <= c[i]`.
pub fn solve_dual(k: &[Vec<f64>], y: &[bool], c: &[f64], tol: f64, max_iterations: usize) -> DualSolution {
    let n = y.len();
    let ys: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();
    let q = |i: usize, j: usize| ys[i] * ys[j] * k[i][j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let at_upper = |a: &[f64], t: usize| a[t] >= c[t];
    let at_lower = |a: &[f64], t: usize| a[t] <= 0.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iterations {
        // First index: maximal violation.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if ys[t] > 0.0 {
                if !at_upper(&alpha, t) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i = t;
                }
            } else if !at_lower(&alpha, t) && grad[t] >= gmax {
                gmax = grad[t];
                i = t;
            }
        }
        // Second index: largest guaranteed decrease of the objective.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i != usize::MAX {
            for t in 0..n {
                let (grad_diff, quad) = if ys[t] > 0.0 {
                    if at_lower(&alpha, t) {
                        continue;
                    }
                    gmax2 = gmax2.max(grad[t]);
                    (gmax + grad[t], k[i][i] + k[t][t] - 2.0 * ys[i] * q(i, t))
                } else {
                    if at_upper(&alpha, t) {
                        continue;
                    }
                    gmax2 = gmax2.max(-grad[t]);
                    (gmax - grad[t], k[i][i] + k[t][t] + 2.0 * ys[i] * q(i, t))
                };
                if grad_diff > 0.0 {
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (c[i], c[j]);
        if ys[i] != ys[j] {
            let quad = (k[i][i] + k[j][j] + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (k[i][i] + k[j][j] - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tolerance {tol}");
    }

    // Bias: average over free vectors, else the midpoint of the feasible range.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if at_upper(&alpha, t) {
            if ys[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if at_lower(&alpha, t) {
            if ys[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    DualSolution {
        alpha,
        rho,
        iterations,
        converged,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub scaler: Scaler,
    pub kernel: PolyKernel,
    /// Scaled support vectors.
    pub support: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub labels: Vec<bool>,
    pub rho: f64,
    pub c: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SvmModel {
    /// Decision value on a raw (unscaled) feature row.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let z = self.scaler.transform(x);
        let mut f = -self.rho;
        for ((sv, a), &y) in self.support.iter().zip(&self.alpha).zip(&self.labels) {
            let s = if y { *a } else { -*a };
            f += s * self.kernel.eval(sv, &z);
        }
        f
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let score = self.decision(x);
        Prediction { label: score > 0.0, score }
    }
}

/// Upper bound of every dual variable.
pub fn class_bounds(y: &[bool], c: f64, weight: ClassWeight) -> Vec<f64> {
    let n = y.len() as f64;
    let n_pos = y.iter().filter(|&&v| v).count() as f64;
    let (cp, cn) = match weight {
        ClassWeight::None => (c, c),
        ClassWeight::Balanced => (c * n / (2.0 * n_pos), c * n / (2.0 * (n - n_pos))),
    };
    y.iter().map(|&v| if v { cp } else { cn }).collect()
}

pub fn svm_train(x: &[Vec<f64>], y: &[bool], cfg: &SvmConfig) -> Result<SvmModel> {
    cfg.validate()?;
    let d = check_training(x, y)?;
    let scaler = Scaler::fit(x);
    let z: Vec<Vec<f64>> = x.iter().map(|r| scaler.transform(r)).collect();
    let kernel = PolyKernel {
        gamma: cfg.gamma.unwrap_or(1.0 / d.max(1) as f64),
        coef0: cfg.coef0,
        degree: cfg.degree,
    };
    let k: Vec<Vec<f64>> = z.iter().map(|a| z.iter().map(|b| kernel.eval(a, b)).collect()).collect();
    let bounds = class_bounds(y, cfg.c, cfg.class_weight);
    let sol = solve_dual(&k, y, &bounds, cfg.tolerance, cfg.max_iterations);
    let mut model = SvmModel {
        scaler,
        kernel,
        support: Vec::new(),
        alpha: Vec::new(),
        labels: Vec::new(),
        rho: sol.rho,
        c: cfg.c,
        iterations: sol.iterations,
        converged: sol.converged,
    };
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            model.support.push(z[i].clone());
            model.alpha.push(a);
            model.labels.push(y[i]);
        }
    }
    Ok(model)
}
