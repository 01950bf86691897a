//! Graph-based visual saliency.
//!
//! Each feature map becomes a fully connected graph over its pixels with
//! weight `|f(p) - f(q)| * exp(-|p - q|^2 / (2 sigma^2))`. The row-normalized
//! weights form a Markov chain whose stationary distribution concentrates
//! mass on pixels that differ from their surroundings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{
    gabor_bank, gaussian_blur, opponency_channels, to_grayscale, ImageBuffer, Plane,
};

use super::SaliencyMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbvsParams {
    /// Width of the working feature maps; height follows the aspect ratio.
    pub working_width: usize,
    /// Spatial falloff as a fraction of the working-map diagonal.
    pub sigma_frac: f64,
    /// Blur applied to the averaged equilibrium, in working pixels.
    pub blur_sigma: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GbvsParams {
    fn default() -> Self {
        GbvsParams {
            working_width: 32,
            sigma_frac: 0.15,
            blur_sigma: 1.0,
            tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

/// Dense row-stochastic matrix, row-major.
#[derive(Clone, Debug)]
pub struct MarkovMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl MarkovMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `pi * P` for a row vector `pi`.
    pub fn left_mul(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &p) in pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += p * m;
            }
        }
        out
    }
}

/// Builds the chain for one feature map. Rows whose weights are all zero
/// (only possible for a constant map) become uniform.
pub fn markov_matrix(feature: &Plane, sigma: f64) -> MarkovMatrix {
    let (w, h) = feature.dims();
    let n = w * h;
    // Spatial factor indexed by (|dx|, |dy|).
    let mut spatial = vec![0.0; w * h];
    for dy in 0..h {
        for dx in 0..w {
            let d2 = (dx * dx + dy * dy) as f64;
            spatial[dy * w + dx] = (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let f = feature.data();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let (xi, yi) = (i % w, i / w);
        let row = &mut data[i * n..(i + 1) * n];
        let mut total = 0.0;
        for (j, slot) in row.iter_mut().enumerate() {
            let (xj, yj) = (j % w, j / w);
            let s = spatial[xi.abs_diff(xj) + w * yi.abs_diff(yj)];
            let v = (f[i] - f[j]).abs() * s;
            *slot = v;
            total += v;
        }
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        } else {
            row.iter_mut().for_each(|v| *v = 1.0 / n as f64);
        }
    }
    MarkovMatrix { n, data }
}

#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub pi: Vec<f64>,
    /// `||pi P - pi||_1` at the returned `pi`.
    pub residual: f64,
    pub iterations: usize,
}

pub fn equilibrium_residual(p: &MarkovMatrix, pi: &[f64]) -> f64 {
    p.left_mul(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
}

/// Stationary distribution by power iteration on the lazy chain `(I + P) / 2`,
/// which shares `P`'s stationary distribution but cannot oscillate on
/// periodic (e.g. bipartite) graphs. Stops once `||pi P - pi||_1 < tolerance`.
pub fn stationary_distribution(p: &MarkovMatrix, tolerance: f64, max_iterations: usize) -> Result<Equilibrium> {
    let n = p.n;
    let mut pi = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for it in 0..=max_iterations {
        let next = p.left_mul(&pi);
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        if residual < tolerance {
            return Ok(Equilibrium {
                pi,
                residual,
                iterations: it,
            });
        }
        for (a, b) in pi.iter_mut().zip(&next) {
            *a = 0.5 * (*a + b);
        }
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= s);
    }
    Err(Error::Convergence {
        iterations: max_iterations,
        residual,
    })
}

fn working_dims(img: &ImageBuffer, working_width: usize) -> (usize, usize) {
    let w = working_width.min(img.width()).max(1);
    let h = ((img.height() as f64 * w as f64 / img.width() as f64).round() as usize).max(1);
    (w, h)
}

fn shrink(p: &Plane, dims: (usize, usize)) -> Plane {
    let scale = p.width() as f64 / dims.0 as f64;
    let pre = if scale > 1.0 { gaussian_blur(p, 0.5 * scale) } else { p.clone() };
    pre.resize_bilinear(dims.0, dims.1)
}

/// Intensity, red-green, blue-yellow (color input only) and orientation
/// energy at working resolution.
pub fn gbvs_feature_maps(img: &ImageBuffer, working_width: usize) -> Vec<Plane> {
    let dims = working_dims(img, working_width);
    let gray = shrink(&to_grayscale(img), dims);
    let mut maps = Vec::with_capacity(4);
    if let Ok((rg, by)) = opponency_channels(img) {
        maps.push(shrink(&rg, dims));
        maps.push(shrink(&by, dims));
    }
    let bank = gabor_bank(&gray, &[0.0, 45.0, 90.0, 135.0]);
    let mut orient = Plane::zeros(dims.0, dims.1);
    for r in &bank {
        for (a, v) in orient.data_mut().iter_mut().zip(r.data()) {
            *a += v / bank.len() as f64;
        }
    }
    maps.insert(0, gray);
    maps.push(orient);
    maps
}

pub fn gbvs_with(img: &ImageBuffer, params: &GbvsParams) -> Result<SaliencyMap> {
    let features = gbvs_feature_maps(img, params.working_width);
    let (w, h) = features[0].dims();
    let sigma = params.sigma_frac * ((w * w + h * h) as f64).sqrt();
    let mut acc = Plane::zeros(w, h);
    for f in &features {
        let chain = markov_matrix(f, sigma);
        let eq = stationary_distribution(&chain, params.tolerance, params.max_iterations)?;
        for (a, v) in acc.data_mut().iter_mut().zip(&eq.pi) {
            *a += v / features.len() as f64;
        }
    }
    let blurred = gaussian_blur(&acc, params.blur_sigma);
    let full = blurred.resize_bilinear(img.width(), img.height());
    Ok(SaliencyMap::from_raw("gbvs", &full))
}

pub fn gbvs(img: &ImageBuffer) -> Result<SaliencyMap> {
    gbvs_with(img, &GbvsParams::default())
}
