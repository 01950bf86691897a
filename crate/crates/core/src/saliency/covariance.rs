//! Region-covariance contrast.
//!
//! Each 8x8 block is summarized by the covariance of per-pixel features
//! `(x/w, y/h, I, |dI/dx|, |dI/dy|)`. A block is salient when its covariance
//! differs from those of its neighbours.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imaging::{to_grayscale, ImageBuffer, Plane};

use super::{require_min_size, SaliencyMap};

const FEATURES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceParams {
    pub block: usize,
}

impl Default for CovarianceParams {
    fn default() -> Self {
        CovarianceParams { block: 8 }
    }
}

type Cov = [[f64; FEATURES]; FEATURES];

fn block_covariance(features: &[[f64; FEATURES]]) -> Cov {
    let n = features.len() as f64;
    let mut mean = [0.0; FEATURES];
    for f in features {
        for k in 0..FEATURES {
            mean[k] += f[k] / n;
        }
    }
    let mut cov = [[0.0; FEATURES]; FEATURES];
    for f in features {
        for a in 0..FEATURES {
            for b in a..FEATURES {
                cov[a][b] += (f[a] - mean[a]) * (f[b] - mean[b]) / n;
            }
        }
    }
    for a in 0..FEATURES {
        for b in 0..a {
            cov[a][b] = cov[b][a];
        }
    }
    cov
}

fn frobenius_distance(a: &Cov, b: &Cov) -> f64 {
    let mut s = 0.0;
    for i in 0..FEATURES {
        for j in 0..FEATURES {
            s += (a[i][j] - b[i][j]).powi(2);
        }
    }
    s.sqrt()
}

/// Per-block contrast on the grid of complete blocks.
pub(crate) fn block_contrast(gray: &Plane, block: usize) -> Plane {
    let (w, h) = gray.dims();
    let (bw, bh) = (w / block, h / block);
    let mut covs = Vec::with_capacity(bw * bh);
    let mut feats = Vec::with_capacity(block * block);
    for by in 0..bh {
        for bx in 0..bw {
            feats.clear();
            for y in by * block..(by + 1) * block {
                for x in bx * block..(bx + 1) * block {
                    let (xi, yi) = (x as isize, y as isize);
                    let dx = (gray.get_reflect(xi + 1, yi) - gray.get_reflect(xi - 1, yi)) / 2.0;
                    let dy = (gray.get_reflect(xi, yi + 1) - gray.get_reflect(xi, yi - 1)) / 2.0;
                    feats.push([
                        x as f64 / w as f64,
                        y as f64 / h as f64,
                        gray.get(x, y),
                        dx.abs(),
                        dy.abs(),
                    ]);
                }
            }
            covs.push(block_covariance(&feats));
        }
    }
    Plane::from_fn(bw, bh, |bx, by| {
        let mut total = 0.0;
        let mut count = 0;
        for ny in by.saturating_sub(1)..=(by + 1).min(bh - 1) {
            for nx in bx.saturating_sub(1)..=(bx + 1).min(bw - 1) {
                if (nx, ny) != (bx, by) {
                    total += frobenius_distance(&covs[by * bw + bx], &covs[ny * bw + nx]);
                    count += 1;
                }
            }
        }
        total / count as f64
    })
}

pub fn local_covariance_with(img: &ImageBuffer, params: &CovarianceParams) -> Result<SaliencyMap> {
    require_min_size(img, 3 * params.block)?;
    let gray = to_grayscale(img);
    let blocks = block_contrast(&gray, params.block);
    let full = blocks.resize_bilinear(img.width(), img.height());
    Ok(SaliencyMap::from_raw("local_covariance", &full))
}

pub fn local_covariance(img: &ImageBuffer) -> Result<SaliencyMap> {
    local_covariance_with(img, &CovarianceParams::default())
}
