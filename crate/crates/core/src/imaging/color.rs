use crate::error::{Error, Result};

use super::{to_grayscale, ImageBuffer, Plane};

/// Pixels darker than this carry no reliable hue and are zeroed.
pub const LUMINANCE_FLOOR: f64 = 0.1;

/// Red-green and blue-yellow opponency maps.
///
/// Uses broadly tuned channels `R = r - (g+b)/2`, `G = g - (r+b)/2`,
/// `B = b - (r+g)/2` (each clamped at 0), then `RG = R - G` and
/// `BY = B - (R+G)/2`.
pub fn opponency_channels(img: &ImageBuffer) -> Result<(Plane, Plane)> {
    if img.channels() != 3 {
        return Err(Error::Channel("opponency needs a 3-channel image"));
    }
    let lum = to_grayscale(img);
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let (w, h) = (img.width(), img.height());
    let mut rg = Plane::zeros(w, h);
    let mut by = Plane::zeros(w, h);
    for i in 0..w * h {
        if lum.data()[i] < LUMINANCE_FLOOR {
            continue;
        }
        let (r, g, b) = (r.data()[i], g.data()[i], b.data()[i]);
        let rt = (r - (g + b) / 2.0).max(0.0);
        let gt = (g - (r + b) / 2.0).max(0.0);
        let bt = (b - (r + g) / 2.0).max(0.0);
        rg.data_mut()[i] = rt - gt;
        by.data_mut()[i] = bt - (rt + gt) / 2.0;
    }
    Ok((rg, by))
}
