//! Itti-Koch-Niebur center-surround saliency.

use crate::error::Result;
use crate::imaging::{
    center_surround, gabor_bank, gaussian_pyramid, itti_normalize, opponency_channels, to_grayscale,
    ImageBuffer, Plane, Pyramid,
};

use super::{require_min_size, SaliencyMap};

pub const ITTI_MIN_SIZE: usize = 32;

const CENTER_LEVELS: [usize; 3] = [2, 3, 4];
const DELTAS: [usize; 2] = [3, 4];
const ORIENTATIONS: [f64; 4] = [0.0, 45.0, 90.0, 135.0];
const OUTPUT_LEVEL: usize = 2;

/// (center, surround) pairs that fit the pyramid. Surrounds deeper than the
/// last level are clamped to it; pairs that collapse are dropped.
fn scale_pairs(levels: usize) -> Vec<(usize, usize)> {
    let last = levels - 1;
    let mut pairs = Vec::new();
    for c in CENTER_LEVELS {
        for d in DELTAS {
            let s = (c + d).min(last);
            if s > c && !pairs.contains(&(c, s)) {
                pairs.push((c, s));
            }
        }
    }
    pairs
}

/// Mean of the normalized across-scale differences, at output resolution.
fn feature_conspicuity(pyr: &Pyramid, pairs: &[(usize, usize)], out: (usize, usize)) -> Result<Plane> {
    let mut acc = Plane::zeros(out.0, out.1);
    for &(c, s) in pairs {
        for cm in center_surround(pyr, &[c], &[s - c])? {
            let n = itti_normalize(&cm.map).resize_bilinear(out.0, out.1);
            for (a, v) in acc.data_mut().iter_mut().zip(n.data()) {
                *a += v;
            }
        }
    }
    let k = pairs.len() as f64;
    Ok(acc.map(|v| v / k))
}

fn mean_of(planes: &[Plane]) -> Plane {
    let (w, h) = planes[0].dims();
    let mut acc = Plane::zeros(w, h);
    for p in planes {
        for (a, v) in acc.data_mut().iter_mut().zip(p.data()) {
            *a += v;
        }
    }
    acc.map(|v| v / planes.len() as f64)
}

/// Unnormalized saliency at pyramid level 2.
pub fn itti_koch_raw(img: &ImageBuffer) -> Result<Plane> {
    require_min_size(img, ITTI_MIN_SIZE)?;
    let gray = to_grayscale(img);
    let depth = CENTER_LEVELS[CENTER_LEVELS.len() - 1] + DELTAS[DELTAS.len() - 1] + 1;
    let intensity = gaussian_pyramid(&gray, depth);
    let pairs = scale_pairs(intensity.len());
    let out = intensity.level(OUTPUT_LEVEL)?.dims();

    let mut conspicuity = vec![itti_normalize(&feature_conspicuity(&intensity, &pairs, out)?)];

    if img.channels() == 3 {
        let (rg, by) = opponency_channels(img)?;
        let rg = feature_conspicuity(&gaussian_pyramid(&rg, depth), &pairs, out)?;
        let by = feature_conspicuity(&gaussian_pyramid(&by, depth), &pairs, out)?;
        conspicuity.push(itti_normalize(&mean_of(&[rg, by])));
    }

    let mut per_angle = Vec::with_capacity(ORIENTATIONS.len());
    for theta in ORIENTATIONS {
        // Only levels >= 2 take part in any pair; shallower ones are placeholders.
        let levels: Vec<Plane> = intensity
            .levels()
            .iter()
            .enumerate()
            .map(|(l, p)| {
                if l < OUTPUT_LEVEL {
                    Plane::zeros(1, 1)
                } else {
                    gabor_bank(p, &[theta]).remove(0)
                }
            })
            .collect();
        let pyr = Pyramid::from_levels(levels);
        per_angle.push(itti_normalize(&feature_conspicuity(&pyr, &pairs, out)?));
    }
    conspicuity.push(itti_normalize(&mean_of(&per_angle)));

    let n = conspicuity.len() as f64;
    Ok(mean_of(&conspicuity).map(|v| v * n))
}

pub fn itti_koch(img: &ImageBuffer) -> Result<SaliencyMap> {
    let raw = itti_koch_raw(img)?;
    let full = raw.resize_bilinear(img.width(), img.height());
    Ok(SaliencyMap::from_raw("itti_koch", &full))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn pairs_adapt_to_depth() {
        assert_eq!(scale_pairs(9), vec![(2, 5), (2, 6), (3, 6), (3, 7), (4, 7), (4, 8)]);
        assert_eq!(scale_pairs(5), vec![(2, 4), (3, 4)]);
    }

    #[test]
    fn constant_image_is_degenerate() {
        for v in [0.0, 0.4, 1.0] {
            let img = ImageBuffer::rgb(
                Plane::filled(64, 64, v),
                Plane::filled(64, 64, v),
                Plane::filled(64, 64, v),
            )
            .unwrap();
            let m = itti_koch(&img).unwrap();
            assert!(m.is_degenerate());
            assert!(m.plane().data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn disk_on_black_peaks_inside_disk() {
        // Oracle: the disk's bounding box, read off the construction.
        let (cx, cy, r) = (84.0, 40.0, 9.0);
        let disk = Plane::from_fn(128, 128, |x, y| {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            if d2 <= r * r { 1.0 } else { 0.0 }
        });
        let img = ImageBuffer::gray(disk).unwrap();
        let m = itti_koch(&img).unwrap();
        assert_eq!((m.width(), m.height()), (128, 128));
        let (ax, ay) = m.plane().argmax();
        assert!((ax as f64 - cx).abs() <= r && (ay as f64 - cy).abs() <= r, "argmax {ax},{ay}");
        let (lo, hi) = m.plane().min_max();
        assert!(lo >= 0.0 && hi == 1.0);
    }

    #[test]
    fn too_small_rejected() {
        let img = ImageBuffer::gray(Plane::filled(31, 64, 0.5)).unwrap();
        assert!(matches!(itti_koch(&img), Err(Error::TooSmall { .. })));
        let ok = ImageBuffer::gray(Plane::from_fn(32, 32, |x, _| (x % 2) as f64)).unwrap();
        assert!(itti_koch(&ok).is_ok());
    }
}
