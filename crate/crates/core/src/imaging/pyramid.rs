use crate::error::{Error, Result};

use super::{convolve_separable, Plane};

const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Dyadic Gaussian pyramid. Level 0 is the source.
#[derive(Clone, Debug)]
pub struct Pyramid {
    levels: Vec<Plane>,
    /// Set when the requested depth exceeded what the image supports.
    pub clipped: bool,
}

impl Pyramid {
    /// Wraps precomputed levels (e.g. per-level filter responses).
    pub fn from_levels(levels: Vec<Plane>) -> Self {
        assert!(!levels.is_empty(), "pyramid needs at least one level");
        Pyramid {
            levels,
            clipped: false,
        }
    }

    pub fn levels(&self) -> &[Plane] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> Result<&Plane> {
        self.levels.get(i).ok_or(Error::LevelIndex {
            index: i,
            levels: self.levels.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Largest level count accepted for an image: `floor(log2(min(w, h)))`, at least 1.
pub fn max_levels(width: usize, height: usize) -> usize {
    let m = width.min(height).max(1);
    ((usize::BITS - 1 - m.leading_zeros()) as usize).max(1)
}

fn downsample(p: &Plane) -> Plane {
    let blurred = convolve_separable(p, &BINOMIAL5, &BINOMIAL5);
    let (w, h) = ((p.width() / 2).max(1), (p.height() / 2).max(1));
    Plane::from_fn(w, h, |x, y| {
        blurred.get((2 * x).min(p.width() - 1), (2 * y).min(p.height() - 1))
    })
}

/// Builds `levels` pyramid levels: 5x5 binomial blur then 2x decimation.
pub fn gaussian_pyramid(img: &Plane, levels: usize) -> Pyramid {
    let levels = levels.max(1);
    let cap = max_levels(img.width(), img.height());
    let clipped = levels > cap;
    let n = levels.min(cap);
    let mut out = Vec::with_capacity(n);
    out.push(img.clone());
    for _ in 1..n {
        let next = downsample(out.last().unwrap());
        out.push(next);
    }
    if clipped {
        log::debug!("pyramid depth {levels} clipped to {n} for {}x{}", img.width(), img.height());
    }
    Pyramid {
        levels: out,
        clipped,
    }
}

/// One across-scale difference map, at the center level's resolution.
#[derive(Clone, Debug)]
pub struct ContrastMap {
    pub center: usize,
    pub surround: usize,
    pub map: Plane,
}

/// `|level c - upsample(level c+delta)|` for every (c, delta) pair.
pub fn center_surround(
    pyr: &Pyramid,
    center_levels: &[usize],
    delta_levels: &[usize],
) -> Result<Vec<ContrastMap>> {
    let mut out = Vec::with_capacity(center_levels.len() * delta_levels.len());
    for &c in center_levels {
        let center = pyr.level(c)?;
        for &d in delta_levels {
            let s = c + d;
            let surround = pyr
                .level(s)?
                .resize_bilinear(center.width(), center.height());
            let map = center.zip_map(&surround, |a, b| (a - b).abs())?;
            out.push(ContrastMap {
                center: c,
                surround: s,
                map,
            });
        }
    }
    Ok(out)
}
