use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Plane;

use super::SaliencyMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CenterParams {
    /// Standard deviation as a fraction of `min(width, height)`.
    pub sigma_frac: f64,
}

impl Default for CenterParams {
    fn default() -> Self {
        CenterParams { sigma_frac: 0.25 }
    }
}

/// Isotropic Gaussian at the image center, scaled to a maximum of 1.
/// Ignores image content.
pub fn center_gaussian_with(width: usize, height: usize, params: &CenterParams) -> Result<SaliencyMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions { width, height });
    }
    let sigma = params.sigma_frac * width.min(height) as f64;
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let p = Plane::from_fn(width, height, |x, y| {
        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        (-d2 / (2.0 * sigma * sigma)).exp()
    });
    let max = p.min_max().1;
    Ok(SaliencyMap::from_unit("center_gaussian", p.map(|v| v / max)))
}

pub fn center_gaussian(width: usize, height: usize) -> Result<SaliencyMap> {
    center_gaussian_with(width, height, &CenterParams::default())
}
