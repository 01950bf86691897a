//! Spectral residual saliency.
//!
//! The log-amplitude spectrum of natural images is locally smooth; what
//! remains after subtracting its local average marks the unexpected parts of
//! the image. Transforming the residual back with the original phase gives
//! the saliency map.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imaging::{box_filter, gaussian_blur, to_grayscale, ImageBuffer, Plane};

use super::SaliencyMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralParams {
    pub working_width: usize,
    pub blur_sigma: f64,
}

impl Default for SpectralParams {
    fn default() -> Self {
        SpectralParams {
            working_width: 64,
            blur_sigma: 2.5,
        }
    }
}

fn fft2d(buf: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    if inverse {
        let scale = 1.0 / (w * h) as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
}

/// Squared-magnitude map at working resolution, blurred, not normalized.
pub fn spectral_residual_raw(img: &ImageBuffer, params: &SpectralParams) -> Plane {
    let gray = to_grayscale(img);
    let w = params.working_width.min(img.width()).max(1);
    let h = ((img.height() as f64 * w as f64 / img.width() as f64).round() as usize).max(1);
    let small = gray.resize_bilinear(w, h);

    let mut spec: Vec<Complex<f64>> = small.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2d(&mut spec, w, h, false);

    let log_amp = Plane::from_vec(w, h, spec.iter().map(|c| c.norm().max(1e-12).ln()).collect())
        .expect("dims");
    let smooth = box_filter(&log_amp, 3);
    for (i, c) in spec.iter_mut().enumerate() {
        let residual = log_amp.data()[i] - smooth.data()[i];
        let phase = c.arg();
        *c = Complex::from_polar(residual.exp(), phase);
    }
    fft2d(&mut spec, w, h, true);

    let energy = Plane::from_vec(w, h, spec.iter().map(|c| c.norm_sqr()).collect()).expect("dims");
    gaussian_blur(&energy, params.blur_sigma)
}

pub fn spectral_residual_with(img: &ImageBuffer, params: &SpectralParams) -> Result<SaliencyMap> {
    let raw = spectral_residual_raw(img, params);
    let full = raw.resize_bilinear(img.width(), img.height());
    Ok(SaliencyMap::from_raw("spectral_residual", &full))
}

pub fn spectral_residual(img: &ImageBuffer) -> Result<SaliencyMap> {
    spectral_residual_with(img, &SpectralParams::default())
}
