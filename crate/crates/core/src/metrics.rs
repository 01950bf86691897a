//! Saliency evaluation metrics.
//!
//! Each metric compares a saliency map `S` (already at the fixation map's
//! resolution) with fixation data. Location-based metrics (`auc_*`, `nss`,
//! `info_gain`) use the binary fixation map; distribution-based metrics
//! (`cc`, `sim`, `kl_div`) use the blurred fixation density.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{DensityMap, FixationMap, Pixel};
use crate::imaging::{Plane, FLAT_TOLERANCE};
use crate::saliency::SaliencyMap;
use crate::seed::{derive_rng, short_hash, Rng};

/// Guards logarithms of zero probabilities.
pub const EPSILON: f64 = 1e-12;

/// Threshold step for the sampled-negative ROC curves.
pub const ROC_STEP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    AucJudd,
    AucBorji,
    Sauc,
    Nss,
    Cc,
    Sim,
    KlDiv,
    InfoGain,
}

impl MetricId {
    /// The fixed order in which metrics appear in every feature vector.
    pub const CANONICAL: [MetricId; 8] = [
        MetricId::AucJudd,
        MetricId::AucBorji,
        MetricId::Sauc,
        MetricId::Nss,
        MetricId::Cc,
        MetricId::Sim,
        MetricId::KlDiv,
        MetricId::InfoGain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::AucJudd => "auc_judd",
            MetricId::AucBorji => "auc_borji",
            MetricId::Sauc => "sauc",
            MetricId::Nss => "nss",
            MetricId::Cc => "cc",
            MetricId::Sim => "sim",
            MetricId::KlDiv => "kl_div",
            MetricId::InfoGain => "info_gain",
        }
    }

    pub fn parse(s: &str) -> Option<MetricId> {
        MetricId::CANONICAL.into_iter().find(|m| m.as_str() == s)
    }
}

impl std::fmt::Display for MetricId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub enabled: Vec<MetricId>,
    pub n_splits: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            enabled: MetricId::CANONICAL.to_vec(),
            n_splits: 100,
        }
    }
}

impl MetricConfig {
    /// Enabled metrics in canonical order, whatever order they were listed in.
    pub fn ordered(&self) -> Vec<MetricId> {
        MetricId::CANONICAL
            .into_iter()
            .filter(|m| self.enabled.contains(m))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled.is_empty() {
            return Err(Error::Config("no metrics enabled".into()));
        }
        let unique: BTreeSet<_> = self.enabled.iter().collect();
        if unique.len() != self.enabled.len() {
            return Err(Error::Config("duplicate metric ids".into()));
        }
        if self.n_splits == 0 {
            return Err(Error::Config("n_splits must be at least 1".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let ids: Vec<&str> = self.ordered().iter().map(|m| m.as_str()).collect();
        short_hash(format!("{}|{}", ids.join(","), self.n_splits).as_bytes())
    }
}

/// Negative locations for the shuffled AUC, drawn from other images' fixations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ShuffleSet {
    pub negatives: Vec<Pixel>,
}

impl ShuffleSet {
    pub fn new(negatives: impl IntoIterator<Item = Pixel>) -> Self {
        let set: BTreeSet<Pixel> = negatives.into_iter().collect();
        ShuffleSet {
            negatives: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.negatives.is_empty()
    }
}

/// Summary statistics of a saliency plane, computed once and reused across
/// every fixation map scored against it.
#[derive(Clone, Debug)]
pub struct PreparedSaliency {
    plane: Plane,
    sorted: Vec<f64>,
    mean: f64,
    std: f64,
    sum: f64,
    min: f64,
    max: f64,
}

impl PreparedSaliency {
    pub fn new(plane: &Plane) -> Self {
        let n = plane.len() as f64;
        let sum = plane.sum();
        let mean = sum / n;
        let var = plane.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = plane.data().to_vec();
        sorted.sort_by(f64::total_cmp);
        let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
        PreparedSaliency {
            plane: plane.clone(),
            sorted,
            mean,
            std: var.sqrt(),
            sum,
            min,
            max,
        }
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn is_constant(&self) -> bool {
        !(self.max - self.min > FLAT_TOLERANCE * self.min.abs().max(self.max.abs()).max(1.0))
    }

    fn at(&self, (x, y): Pixel) -> f64 {
        self.plane.get(x, y)
    }

    /// Min-max rescaled value used by the thresholded ROC curves.
    fn unit(&self, p: Pixel) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (self.at(p) - self.min) / (self.max - self.min)
        }
    }

    /// `S / sum(S)`; `None` when the map has no mass.
    fn probability(&self, p: Pixel) -> Option<f64> {
        (self.sum > 0.0).then(|| self.at(p) / self.sum)
    }
}

fn check_dims(s: &Plane, dims: (usize, usize)) -> Result<()> {
    if s.dims() != dims {
        return Err(Error::Shape {
            expected: dims,
            actual: s.dims(),
        });
    }
    Ok(())
}

/// Mean standardized saliency at fixated pixels (population std).
pub fn nss(s: &Plane, fix: &FixationMap) -> Result<f64> {
    nss_prepared(&PreparedSaliency::new(s), fix)
}

fn nss_prepared(s: &PreparedSaliency, fix: &FixationMap) -> Result<f64> {
    check_dims(&s.plane, fix.dims())?;
    if fix.hit_count() == 0 {
        return Err(Error::NoFixation);
    }
    if !(s.std > 0.0) {
        return Err(Error::DegenerateMap);
    }
    let total: f64 = fix.hits().iter().map(|&p| (s.at(p) - s.mean) / s.std).sum();
    Ok(total / fix.hit_count() as f64)
}

/// Pearson correlation of two equally sized grids.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if is_flat(a) || is_flat(b) {
        return Err(Error::DegenerateMap);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

fn is_flat(v: &[f64]) -> bool {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    !(hi - lo > FLAT_TOLERANCE * lo.abs().max(hi.abs()).max(1.0))
}

pub fn cc(s: &Plane, d: &DensityMap) -> Result<f64> {
    check_dims(s, d.dims())?;
    pearson(s.data(), d.values())
}

/// Histogram intersection `sum(min(S/sum(S), D))`.
pub fn sim(s: &Plane, d: &DensityMap) -> Result<f64> {
    check_dims(s, d.dims())?;
    let total = s.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMap);
    }
    Ok(sim_normalized(s.data().iter().map(|v| v / total), d.values()))
}

fn sim_normalized(s: impl Iterator<Item = f64>, d: &[f64]) -> f64 {
    s.zip(d).map(|(a, &b)| a.min(b)).sum()
}

/// `KL(D || S)` in nats, with `S` renormalized to unit mass. A map without
/// mass is treated as uniform.
pub fn kl_div(s: &Plane, d: &DensityMap) -> Result<f64> {
    check_dims(s, d.dims())?;
    let total = s.sum();
    let n = s.len() as f64;
    let probs = s.data().iter().map(|&v| if total > 0.0 { v / total } else { 1.0 / n });
    Ok(kl_normalized(probs, d.values()))
}

fn kl_normalized(s: impl Iterator<Item = f64>, d: &[f64]) -> f64 {
    s.zip(d)
        .filter(|(_, &q)| q > 0.0)
        .map(|(p, &q)| q * (q / (p + EPSILON)).ln())
        .sum()
}

/// Area under the ROC curve for two samples, ties counted as one half
/// (Mann-Whitney `U / (n+ n-)`).
pub fn mann_whitney_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut neg = negatives.to_vec();
    neg.sort_by(f64::total_cmp);
    auc_against_sorted(positives, &neg, neg.len())
}

/// `negatives_sorted` holds the negative values in ascending order.
fn auc_against_sorted(positives: &[f64], negatives_sorted: &[f64], n_neg: usize) -> f64 {
    let mut u = 0.0;
    for &v in positives {
        let below = negatives_sorted.partition_point(|&x| x < v);
        let not_above = negatives_sorted.partition_point(|&x| x <= v);
        u += below as f64 + 0.5 * (not_above - below) as f64;
    }
    u / (positives.len() as f64 * n_neg as f64)
}

/// ROC area with positives at the fixated pixels and every other pixel as a
/// negative.
pub fn auc_judd(s: &Plane, fix: &FixationMap) -> Result<f64> {
    auc_judd_prepared(&PreparedSaliency::new(s), fix)
}

fn auc_judd_prepared(s: &PreparedSaliency, fix: &FixationMap) -> Result<f64> {
    check_dims(&s.plane, fix.dims())?;
    let n_pos = fix.hit_count();
    if n_pos == 0 {
        return Err(Error::NoFixation);
    }
    let n_neg = s.plane.len() - n_pos;
    if n_neg == 0 {
        return Err(Error::UndefinedNegative);
    }
    let mut pos: Vec<f64> = fix.hits().iter().map(|&p| s.at(p)).collect();
    pos.sort_by(f64::total_cmp);
    // Count against all pixels, then remove the positive-vs-positive pairs.
    let mut u = 0.0;
    for &v in &pos {
        let below_all = s.sorted.partition_point(|&x| x < v);
        let le_all = s.sorted.partition_point(|&x| x <= v);
        let below_pos = pos.partition_point(|&x| x < v);
        let le_pos = pos.partition_point(|&x| x <= v);
        let below = below_all - below_pos;
        let ties = (le_all - below_all) - (le_pos - below_pos);
        u += below as f64 + 0.5 * ties as f64;
    }
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Trapezoidal ROC area with thresholds every `ROC_STEP` over [0, 1].
fn thresholded_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let steps = (1.0 / ROC_STEP).round() as usize;
    let frac_at_least = |vals: &[f64], t: f64| vals.iter().filter(|&&v| v >= t).count() as f64 / vals.len() as f64;
    let mut area = 0.0;
    let (mut prev_fp, mut prev_tp) = (0.0, 0.0);
    for k in (0..=steps).rev() {
        let t = k as f64 * ROC_STEP;
        let (fp, tp) = (frac_at_least(neg, t), frac_at_least(pos, t));
        area += (fp - prev_fp) * (tp + prev_tp) / 2.0;
        prev_fp = fp;
        prev_tp = tp;
    }
    area + (1.0 - prev_fp) * (1.0 + prev_tp) / 2.0
}

/// Mean over `n_splits` of the thresholded ROC area, each split drawing
/// `|hits|` negatives uniformly (with replacement) from the non-fixated pixels.
pub fn auc_borji(s: &Plane, fix: &FixationMap, n_splits: usize, rng: &mut Rng) -> Result<f64> {
    auc_borji_prepared(&PreparedSaliency::new(s), fix, n_splits, rng)
}

fn auc_borji_prepared(s: &PreparedSaliency, fix: &FixationMap, n_splits: usize, rng: &mut Rng) -> Result<f64> {
    check_dims(&s.plane, fix.dims())?;
    let n_pos = fix.hit_count();
    if n_pos == 0 {
        return Err(Error::NoFixation);
    }
    let (w, total) = (fix.width(), s.plane.len());
    if total == n_pos {
        return Err(Error::UndefinedNegative);
    }
    let pos: Vec<f64> = fix.hits().iter().map(|&p| s.unit(p)).collect();
    let mut neg = Vec::with_capacity(n_pos);
    let mut acc = 0.0;
    for _ in 0..n_splits {
        neg.clear();
        while neg.len() < n_pos {
            let i = rng.random_range(0..total);
            let p = (i % w, i / w);
            if !fix.contains(p) {
                neg.push(s.unit(p));
            }
        }
        acc += thresholded_auc(&pos, &neg);
    }
    Ok(acc / n_splits as f64)
}

/// As [`auc_borji`], but negatives are drawn without replacement from the
/// shuffle set minus the fixated pixels, which cancels shared center bias.
pub fn sauc(s: &Plane, fix: &FixationMap, shuffle: &ShuffleSet, n_splits: usize, rng: &mut Rng) -> Result<f64> {
    sauc_prepared(&PreparedSaliency::new(s), fix, shuffle, n_splits, rng)
}

fn sauc_prepared(
    s: &PreparedSaliency,
    fix: &FixationMap,
    shuffle: &ShuffleSet,
    n_splits: usize,
    rng: &mut Rng,
) -> Result<f64> {
    check_dims(&s.plane, fix.dims())?;
    let n_pos = fix.hit_count();
    if n_pos == 0 {
        return Err(Error::NoFixation);
    }
    let pool: Vec<Pixel> = shuffle
        .negatives
        .iter()
        .copied()
        .filter(|&p| !fix.contains(p) && p.0 < fix.width() && p.1 < fix.height())
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyNegative);
    }
    let pos: Vec<f64> = fix.hits().iter().map(|&p| s.unit(p)).collect();
    let k = n_pos.min(pool.len());
    let mut acc = 0.0;
    for _ in 0..n_splits {
        let neg: Vec<f64> = sample(rng, pool.len(), k).iter().map(|i| s.unit(pool[i])).collect();
        acc += thresholded_auc(&pos, &neg);
    }
    Ok(acc / n_splits as f64)
}

/// Mean log2-probability advantage of `S` over `baseline` at fixated pixels.
pub fn info_gain(s: &Plane, fix: &FixationMap, baseline: &DensityMap) -> Result<f64> {
    info_gain_prepared(&PreparedSaliency::new(s), fix, baseline)
}

fn info_gain_prepared(s: &PreparedSaliency, fix: &FixationMap, baseline: &DensityMap) -> Result<f64> {
    check_dims(&s.plane, fix.dims())?;
    check_dims(&s.plane, baseline.dims())?;
    if fix.hit_count() == 0 {
        return Err(Error::NoFixation);
    }
    let mut total = 0.0;
    for &p in fix.hits() {
        let q = s.probability(p).ok_or(Error::DegenerateMap)?;
        total += (EPSILON + q).log2() - (EPSILON + baseline.at(p)).log2();
    }
    Ok(total / fix.hit_count() as f64)
}

/// Feature scores for one saliency map against one fixation map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalVector {
    pub metric_ids: Vec<MetricId>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub vector: EvalVector,
    /// Metrics whose value came from the documented fallback.
    pub fallbacks: Vec<MetricId>,
}

impl Evaluation {
    pub fn degenerate(&self) -> bool {
        !self.fallbacks.is_empty()
    }
}

/// Inputs shared by every metric for one (map, fixations) pair.
pub struct EvalInputs<'a> {
    pub fixations: &'a FixationMap,
    pub density: &'a DensityMap,
    pub shuffle: Option<&'a ShuffleSet>,
    pub baseline: &'a DensityMap,
    /// Seed of this pair's random streams (one per metric).
    pub seed: u64,
}

/// Scores every enabled metric in canonical order.
///
/// A constant saliency map carries no ranking information: it scores 0 for
/// NSS and CC and 0.5 for every AUC, and SIM, KL and IG are computed against
/// the uniform distribution. Such substitutions are listed in `fallbacks`.
/// A shuffle pool with no usable negatives likewise gives sAUC 0.5.
pub fn evaluate_all(s: &PreparedSaliency, inputs: &EvalInputs, config: &MetricConfig) -> Result<Evaluation> {
    let fix = inputs.fixations;
    check_dims(&s.plane, fix.dims())?;
    if fix.hit_count() == 0 {
        return Err(Error::NoFixation);
    }
    let constant = s.is_constant();
    let n = s.plane.len() as f64;
    let uniform = || std::iter::repeat_n(1.0 / n, s.plane.len());
    let mut fallbacks = Vec::new();
    let metric_ids = config.ordered();
    let mut values = Vec::with_capacity(metric_ids.len());
    for &m in &metric_ids {
        let mut rng = derive_rng(inputs.seed, &[m.as_str()]);
        let v = match m {
            MetricId::AucJudd | MetricId::AucBorji | MetricId::Nss if constant => {
                fallbacks.push(m);
                if m == MetricId::Nss { 0.0 } else { 0.5 }
            }
            MetricId::AucJudd => auc_judd_prepared(s, fix)?,
            MetricId::AucBorji => auc_borji_prepared(s, fix, config.n_splits, &mut rng)?,
            MetricId::Sauc => {
                let res = match inputs.shuffle {
                    _ if constant => Err(Error::DegenerateMap),
                    Some(sh) => sauc_prepared(s, fix, sh, config.n_splits, &mut rng),
                    None => Err(Error::EmptyNegative),
                };
                match res {
                    Ok(v) => v,
                    Err(Error::DegenerateMap | Error::EmptyNegative) => {
                        fallbacks.push(m);
                        0.5
                    }
                    Err(e) => return Err(e),
                }
            }
            MetricId::Nss => nss_prepared(s, fix)?,
            MetricId::Cc => match pearson(s.plane.data(), inputs.density.values()) {
                Ok(v) => v,
                Err(Error::DegenerateMap) => {
                    fallbacks.push(m);
                    0.0
                }
                Err(e) => return Err(e),
            },
            MetricId::Sim if constant => sim_normalized(uniform(), inputs.density.values()),
            MetricId::Sim => sim(&s.plane, inputs.density)?,
            MetricId::KlDiv if constant => kl_normalized(uniform(), inputs.density.values()),
            MetricId::KlDiv => kl_div(&s.plane, inputs.density)?,
            MetricId::InfoGain if constant => {
                let b = inputs.baseline;
                check_dims(&s.plane, b.dims())?;
                fix.hits()
                    .iter()
                    .map(|&p| (EPSILON + 1.0 / n).log2() - (EPSILON + b.at(p)).log2())
                    .sum::<f64>()
                    / fix.hit_count() as f64
            }
            MetricId::InfoGain => info_gain_prepared(s, fix, inputs.baseline)?,
        };
        debug_assert!(v.is_finite(), "{m} produced {v}");
        values.push(v);
    }
    Ok(Evaluation {
        vector: EvalVector { metric_ids, values },
        fallbacks,
    })
}

/// Prepares `map` at the fixation resolution and scores it.
pub fn evaluate_map(map: &SaliencyMap, inputs: &EvalInputs, config: &MetricConfig) -> Result<Evaluation> {
    let (w, h) = inputs.fixations.dims();
    let prepared = PreparedSaliency::new(map.resized(w, h).plane());
    evaluate_all(&prepared, inputs, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn plane(w: usize, h: usize, v: &[f64]) -> Plane {
        Plane::from_vec(w, h, v.to_vec()).unwrap()
    }

    fn hits(w: usize, h: usize, p: &[Pixel]) -> FixationMap {
        FixationMap::from_hits(w, h, p.iter().copied()).unwrap()
    }

    fn density(w: usize, h: usize, v: &[f64]) -> DensityMap {
        DensityMap::from_plane(&plane(w, h, v)).unwrap()
    }

    #[test]
    fn nss_analytic() {
        let s = plane(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let v = nss(&s, &hits(2, 2, &[(1, 1)])).unwrap();
        assert!((v - 3f64.sqrt()).abs() < 1e-12);
        assert!((v - 0.75 / 0.1875f64.sqrt()).abs() < 1e-12);
        let v = nss(&s, &hits(2, 2, &[(0, 0)])).unwrap();
        assert!((v + 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!(matches!(nss(&plane(2, 2, &[0.3; 4]), &hits(2, 2, &[(0, 0)])), Err(Error::DegenerateMap)));
        assert!(matches!(nss(&s, &hits(2, 2, &[])), Err(Error::NoFixation)));
    }

    #[test]
    fn cc_cases() {
        let s = plane(3, 2, &[0.1, 0.5, 0.2, 0.9, 0.0, 0.3]);
        let d = DensityMap::from_plane(&s).unwrap();
        assert!((cc(&s, &d).unwrap() - 1.0).abs() < 1e-12);
        let inv = DensityMap::from_plane(&s.map(|v| 1.0 - v)).unwrap();
        assert!((cc(&s, &inv).unwrap() + 1.0).abs() < 1e-12);
        let other = density(3, 2, &[0.3, 0.1, 0.1, 0.2, 0.2, 0.1]);
        let ab = pearson(s.data(), other.values()).unwrap();
        let ba = pearson(other.values(), s.data()).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(matches!(cc(&plane(3, 2, &[0.5; 6]), &d), Err(Error::DegenerateMap)));
    }

    #[test]
    fn sim_cases() {
        let d = density(2, 1, &[0.5, 0.5]);
        assert!((sim(&plane(2, 1, &[1.0, 0.0]), &d).unwrap() - 0.5).abs() < 1e-12);
        assert!((sim(&plane(2, 1, &[3.0, 3.0]), &d).unwrap() - 1.0).abs() < 1e-12);
        let disjoint = density(2, 1, &[0.0, 1.0]);
        assert_eq!(sim(&plane(2, 1, &[1.0, 0.0]), &disjoint).unwrap(), 0.0);
        assert!(matches!(sim(&plane(2, 1, &[0.0, 0.0]), &d), Err(Error::DegenerateMap)));
    }

    #[test]
    fn kl_cases() {
        let d = density(2, 1, &[0.75, 0.25]);
        let expected = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        let v = kl_div(&plane(2, 1, &[0.5, 0.5]), &d).unwrap();
        assert!((v - expected).abs() < 1e-9);
        assert!((v - 0.130812).abs() < 1e-6);
        assert!(kl_div(&plane(2, 1, &[0.75, 0.25]), &d).unwrap().abs() < 1e-9);
    }

    #[test]
    fn judd_cases() {
        let s = plane(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(auc_judd(&s, &hits(2, 2, &[(0, 1), (1, 1)])).unwrap(), 1.0);
        assert_eq!(auc_judd(&s, &hits(2, 2, &[(1, 0), (1, 1)])).unwrap(), 0.75);
        assert_eq!(auc_judd(&plane(2, 2, &[0.7; 4]), &hits(2, 2, &[(0, 0)])).unwrap(), 0.5);
        let all = hits(2, 2, &[(0, 0), (1, 0), (0, 1), (1, 1)]);
        assert!(matches!(auc_judd(&s, &all), Err(Error::UndefinedNegative)));
    }

    #[test]
    fn borji_cases() {
        let mut s = Plane::zeros(16, 16);
        let fix = hits(16, 16, &[(3, 4), (10, 12), (7, 7)]);
        for &(x, y) in fix.hits() {
            s.set(x, y, 1.0);
        }
        for seed in 0..5 {
            assert_eq!(auc_borji(&s, &fix, 20, &mut rng_from_seed(seed)).unwrap(), 1.0);
        }
        let c = Plane::filled(16, 16, 0.4);
        assert!((auc_borji(&c, &fix, 10, &mut rng_from_seed(1)).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            auc_borji(&s, &hits(16, 16, &[]), 10, &mut rng_from_seed(1)),
            Err(Error::NoFixation)
        ));
    }

    #[test]
    fn borji_random_map_is_chance() {
        // Expectation argument: with S independent of the hits, every split's
        // ROC area has mean 0.5; 100 splits of 64 hits shrink the spread.
        let mut rng = rng_from_seed(42);
        let s = Plane::from_fn(64, 64, |_, _| 0.0).map(|_| rng.random::<f64>());
        let fix = FixationMap::from_hits(64, 64, (0..64).map(|_| (rng.random_range(0..64), rng.random_range(0..64)))).unwrap();
        let v = auc_borji(&s, &fix, 100, &mut rng_from_seed(7)).unwrap();
        assert!((v - 0.5).abs() < 0.05, "{v}");
    }

    #[test]
    fn sauc_cases() {
        let mut s = Plane::zeros(8, 8);
        s.set(2, 2, 1.0);
        s.set(5, 5, 1.0);
        let fix = hits(8, 8, &[(2, 2), (5, 5)]);
        let shuffle = ShuffleSet::new([(0, 0), (7, 7), (3, 6), (6, 1)]);
        assert_eq!(sauc(&s, &fix, &shuffle, 30, &mut rng_from_seed(3)).unwrap(), 1.0);
        let same = ShuffleSet::new([(2, 2), (5, 5)]);
        assert!(matches!(sauc(&s, &fix, &same, 3, &mut rng_from_seed(3)), Err(Error::EmptyNegative)));
    }

    #[test]
    fn info_gain_cases() {
        let fix = hits(2, 1, &[(0, 0)]);
        let b = density(2, 1, &[0.25, 0.75]);
        assert!((info_gain(&plane(2, 1, &[0.5, 0.5]), &fix, &b).unwrap() - 1.0).abs() < 1e-9);
        let b = density(2, 1, &[0.5, 0.5]);
        assert!((info_gain(&plane(2, 1, &[0.25, 0.75]), &fix, &b).unwrap() + 1.0).abs() < 1e-9);
        assert!(info_gain(&plane(2, 1, &[0.5, 0.5]), &fix, &b).unwrap().abs() < 1e-9);
    }

    fn inputs_fixture() -> (Plane, FixationMap, DensityMap, ShuffleSet, DensityMap) {
        let s = Plane::from_fn(10, 8, |x, y| ((x * 3 + y * 5) % 7) as f64 / 6.0);
        let fix = hits(10, 8, &[(1, 1), (4, 5), (8, 2)]);
        let d = crate::gaze::blur_to_density(&fix, 1.0).unwrap();
        let shuffle = ShuffleSet::new([(0, 0), (9, 7), (5, 5), (2, 6)]);
        let base = DensityMap::uniform(10, 8);
        (s, fix, d, shuffle, base)
    }

    #[test]
    fn evaluate_all_lengths_and_order() {
        let (s, fix, d, shuffle, base) = inputs_fixture();
        let inputs = EvalInputs { fixations: &fix, density: &d, shuffle: Some(&shuffle), baseline: &base, seed: 5 };
        let prepared = PreparedSaliency::new(&s);
        let full = evaluate_all(&prepared, &inputs, &MetricConfig::default()).unwrap();
        assert_eq!(full.vector.values.len(), 8);
        assert_eq!(full.vector.metric_ids, MetricId::CANONICAL.to_vec());
        assert!(!full.degenerate());
        let cfg = MetricConfig {
            enabled: vec![MetricId::KlDiv, MetricId::AucJudd, MetricId::Nss, MetricId::Cc, MetricId::Sim, MetricId::AucBorji],
            n_splits: 100,
        };
        let partial = evaluate_all(&prepared, &inputs, &cfg).unwrap();
        assert_eq!(
            partial.vector.metric_ids,
            vec![MetricId::AucJudd, MetricId::AucBorji, MetricId::Nss, MetricId::Cc, MetricId::Sim, MetricId::KlDiv]
        );
        for (id, v) in partial.vector.metric_ids.iter().zip(&partial.vector.values) {
            let i = MetricId::CANONICAL.iter().position(|m| m == id).unwrap();
            assert_eq!(*v, full.vector.values[i]);
        }
    }

    #[test]
    fn evaluate_all_constant_fallback() {
        let (_, fix, d, shuffle, base) = inputs_fixture();
        let inputs = EvalInputs { fixations: &fix, density: &d, shuffle: Some(&shuffle), baseline: &base, seed: 5 };
        for c in [0.0, 0.6] {
            let e = evaluate_all(&PreparedSaliency::new(&Plane::filled(10, 8, c)), &inputs, &MetricConfig::default()).unwrap();
            let v = &e.vector.values;
            assert_eq!(&v[..5], &[0.5, 0.5, 0.5, 0.0, 0.0]);
            assert!(v.iter().all(|x| x.is_finite()));
            assert!(e.degenerate());
            let uniform = Plane::filled(10, 8, 1.0);
            assert!((v[5] - sim(&uniform, &d).unwrap()).abs() < 1e-12);
            assert!((v[6] - kl_div(&uniform, &d).unwrap()).abs() < 1e-12);
            assert!(v[7].abs() < 1e-9);
        }
    }

    #[test]
    fn evaluate_all_requires_fixations() {
        let (s, _, d, shuffle, base) = inputs_fixture();
        let empty = hits(10, 8, &[]);
        let inputs = EvalInputs { fixations: &empty, density: &d, shuffle: Some(&shuffle), baseline: &base, seed: 5 };
        assert!(matches!(
            evaluate_all(&PreparedSaliency::new(&s), &inputs, &MetricConfig::default()),
            Err(Error::NoFixation)
        ));
    }

    #[test]
    fn metric_config_hash_ignores_listing_order() {
        let a = MetricConfig { enabled: vec![MetricId::Nss, MetricId::Cc], n_splits: 10 };
        let b = MetricConfig { enabled: vec![MetricId::Cc, MetricId::Nss], n_splits: 10 };
        assert_eq!(a.hash(), b.hash());
        assert!(MetricConfig { enabled: vec![], n_splits: 1 }.validate().is_err());
        assert_eq!(MetricId::parse("kl_div"), Some(MetricId::KlDiv));
    }
}
