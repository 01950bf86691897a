use super::{convolve2d, Plane};

/// Gabor pair parameters. Angles are in degrees; 0 responds to vertical edges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaborParams {
    pub wavelength: f64,
    pub sigma: f64,
    pub aspect: f64,
}

impl Default for GaborParams {
    fn default() -> Self {
        GaborParams {
            wavelength: 7.0,
            sigma: 2.8,
            aspect: 1.0,
        }
    }
}

/// Even (cosine) and odd (sine) kernels, both zero-mean, side `2*ceil(3 sigma)+1`.
pub fn gabor_kernels(params: &GaborParams, theta_deg: f64) -> (Vec<f64>, Vec<f64>, usize) {
    let radius = (3.0 * params.sigma).ceil() as isize;
    let side = (2 * radius + 1) as usize;
    let theta = theta_deg.to_radians();
    let (st, ct) = theta.sin_cos();
    let mut even = Vec::with_capacity(side * side);
    let mut odd = Vec::with_capacity(side * side);
    for y in -radius..=radius {
        for x in -radius..=radius {
            let (x, y) = (x as f64, y as f64);
            let xr = x * ct + y * st;
            let yr = -x * st + y * ct;
            let env = (-(xr * xr + params.aspect * params.aspect * yr * yr)
                / (2.0 * params.sigma * params.sigma))
                .exp();
            let phase = 2.0 * std::f64::consts::PI * xr / params.wavelength;
            even.push(env * phase.cos());
            odd.push(env * phase.sin());
        }
    }
    for k in [&mut even, &mut odd] {
        let mean = k.iter().sum::<f64>() / k.len() as f64;
        k.iter_mut().for_each(|v| *v -= mean);
    }
    (even, odd, side)
}

/// Quadrature-pair energy `sqrt(even^2 + odd^2)` per orientation.
pub fn gabor_bank(img: &Plane, orientations: &[f64]) -> Vec<Plane> {
    gabor_bank_with(img, orientations, &GaborParams::default())
}

pub(crate) fn gabor_bank_with(img: &Plane, orientations: &[f64], params: &GaborParams) -> Vec<Plane> {
    orientations
        .iter()
        .map(|&theta| {
            let (even, odd, side) = gabor_kernels(params, theta);
            let re = convolve2d(img, &even, side, side);
            let im = convolve2d(img, &odd, side, side);
            re.zip_map(&im, |a, b| a.hypot(b)).expect("same dims")
        })
        .collect()
}
