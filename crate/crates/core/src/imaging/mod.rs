//! Low-level image operations shared by the saliency models.
//!
//! All convolutions use symmetric reflect padding (`cba|abc|cba`), so a
//! constant image stays constant under any normalized kernel and mirrored
//! inputs give mirrored outputs.

mod color;
mod gabor;
mod normalize;
mod pyramid;

use std::path::Path;

use crate::error::{Error, Result};

pub use color::opponency_channels;
pub use gabor::{gabor_bank, gabor_kernels, GaborParams};
pub use normalize::{itti_normalize, LOCAL_MAX_CELL};
pub use pyramid::{center_surround, gaussian_pyramid, ContrastMap, Pyramid};

/// Relative spread below which a plane is treated as constant.
pub const FLAT_TOLERANCE: f64 = 1e-12;

/// A single-channel grid of reals, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(Error::Format(format!(
                "plane data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Value at possibly out-of-range coordinates, reflected back inside.
    #[inline]
    pub fn get_reflect(&self, x: isize, y: isize) -> f64 {
        self.get(reflect(x, self.width), reflect(y, self.height))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Result<Plane> {
        self.check_same_dims(other)?;
        Ok(Plane {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_dims(&self, other: &Plane) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Index of the first maximum, as (x, y).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    /// Rescales to [0, 1]. A constant plane maps to all zeros, where a range
    /// below `FLAT_TOLERANCE * max(1, |value|)` counts as constant so that
    /// rounding noise on flat input is not stretched into a pattern.
    pub fn normalized_min_max(&self) -> Plane {
        let (lo, hi) = self.min_max();
        let range = hi - lo;
        let scale = lo.abs().max(hi.abs()).max(1.0);
        if !(range > FLAT_TOLERANCE * scale) || !range.is_finite() {
            return Plane::zeros(self.width, self.height);
        }
        self.map(|v| ((v - lo) / range).clamp(0.0, 1.0))
    }

    /// Left-right mirror image.
    pub fn flip_horizontal(&self) -> Plane {
        Plane::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y)
        })
    }

    pub fn resize_bilinear(&self, new_width: usize, new_height: usize) -> Plane {
        resize_plane(self, new_width, new_height)
    }
}

/// Symmetric reflection of an index into `0..n` (`-1 -> 0`, `n -> n-1`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// A 1- or 3-channel image with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    planes: Vec<Plane>,
}

impl ImageBuffer {
    pub fn gray(plane: Plane) -> Result<Self> {
        Self::from_planes(vec![plane])
    }

    pub fn rgb(r: Plane, g: Plane, b: Plane) -> Result<Self> {
        Self::from_planes(vec![r, g, b])
    }

    pub fn from_planes(planes: Vec<Plane>) -> Result<Self> {
        if planes.len() != 1 && planes.len() != 3 {
            return Err(Error::Channel("image must have 1 or 3 channels"));
        }
        let (width, height) = planes[0].dims();
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        for p in &planes[1..] {
            planes[0].check_same_dims(p)?;
        }
        if planes
            .iter()
            .flat_map(|p| p.data())
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::Format("image values must lie in [0, 1]".into()));
        }
        Ok(ImageBuffer {
            width,
            height,
            planes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn plane(&self, c: usize) -> &Plane {
        &self.planes[c]
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    /// Decodes PNG or JPEG bytes; 8-bit channels are mapped to [0, 1].
    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
        let gray = matches!(
            img.color(),
            image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
        );
        let (w, h) = (img.width() as usize, img.height() as usize);
        if gray {
            let buf = img.to_luma8();
            let plane = Plane::from_vec(w, h, buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect())
                .map_err(|e| e.to_string())?;
            Self::gray(plane).map_err(|e| e.to_string())
        } else {
            let buf = img.to_rgb8();
            let mut chans = [Vec::with_capacity(w * h), Vec::with_capacity(w * h), Vec::with_capacity(w * h)];
            for p in buf.pixels() {
                for c in 0..3 {
                    chans[c].push(p.0[c] as f64 / 255.0);
                }
            }
            let [r, g, b] = chans;
            let mk = |v| Plane::from_vec(w, h, v).map_err(|e| e.to_string());
            Self::rgb(mk(r)?, mk(g)?, mk(b)?).map_err(|e| e.to_string())
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|message| Error::Image {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Encodes as an 8-bit PNG (gray or RGB).
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let to8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        let (buf, color) = if self.channels() == 1 {
            let buf: Vec<u8> = self.planes[0].data().iter().map(|&v| to8(v)).collect();
            (buf, image::ExtendedColorType::L8)
        } else {
            let mut buf = Vec::with_capacity(self.width * self.height * 3);
            for i in 0..self.width * self.height {
                for p in &self.planes {
                    buf.push(to8(p.data()[i]));
                }
            }
            (buf, image::ExtendedColorType::Rgb8)
        };
        let mut out = Vec::new();
        image::ImageEncoder::write_image(image::codecs::png::PngEncoder::new(&mut out), &buf, w, h, color)
            .map_err(|e| Error::Format(format!("png encoding: {e}")))?;
        Ok(out)
    }

    /// Writes an 8-bit PNG atomically.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, &self.to_png_bytes()?)
    }
}

/// Luminance `0.299 R + 0.587 G + 0.114 B`; identity for single-channel input.
pub fn to_grayscale(img: &ImageBuffer) -> Plane {
    if img.channels() == 1 {
        return img.planes[0].clone();
    }
    let (r, g, b) = (&img.planes[0], &img.planes[1], &img.planes[2]);
    let data = r
        .data()
        .iter()
        .zip(g.data())
        .zip(b.data())
        .map(|((&r, &g), &b)| 0.299 * r + 0.587 * g + 0.114 * b)
        .collect();
    Plane {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Bilinear resize of every channel with corner-aligned sampling.
pub fn resize_bilinear(img: &ImageBuffer, new_width: usize, new_height: usize) -> ImageBuffer {
    let planes: Vec<Plane> = img
        .planes
        .iter()
        .map(|p| resize_plane(p, new_width, new_height))
        .collect();
    ImageBuffer {
        width: new_width,
        height: new_height,
        planes,
    }
}

fn source_coord(i: usize, dst: usize, src: usize) -> f64 {
    if dst == 1 {
        (src as f64 - 1.0) / 2.0
    } else {
        i as f64 * (src as f64 - 1.0) / (dst as f64 - 1.0)
    }
}

fn resize_plane(p: &Plane, new_width: usize, new_height: usize) -> Plane {
    assert!(new_width > 0 && new_height > 0, "resize target must be nonempty");
    if p.dims() == (new_width, new_height) {
        return p.clone();
    }
    let xs: Vec<(usize, usize, f64)> = (0..new_width)
        .map(|x| lerp_index(source_coord(x, new_width, p.width), p.width))
        .collect();
    let mut out = Vec::with_capacity(new_width * new_height);
    for y in 0..new_height {
        let (y0, y1, ty) = lerp_index(source_coord(y, new_height, p.height), p.height);
        for &(x0, x1, tx) in &xs {
            let top = p.get(x0, y0) * (1.0 - tx) + p.get(x1, y0) * tx;
            let bottom = p.get(x0, y1) * (1.0 - tx) + p.get(x1, y1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    Plane {
        width: new_width,
        height: new_height,
        data: out,
    }
}

fn lerp_index(s: f64, n: usize) -> (usize, usize, f64) {
    let i0 = (s.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, s - i0 as f64)
}

/// Correlates `p` with a 2-D kernel (`kw` x `kh`, odd sizes) under reflect padding.
pub fn convolve2d(p: &Plane, kernel: &[f64], kw: usize, kh: usize) -> Plane {
    debug_assert_eq!(kernel.len(), kw * kh);
    let (rx, ry) = ((kw / 2) as isize, (kh / 2) as isize);
    let mut out = Plane::zeros(p.width, p.height);
    for y in 0..p.height as isize {
        for x in 0..p.width as isize {
            let mut acc = 0.0;
            for ky in 0..kh as isize {
                let sy = reflect(y + ky - ry, p.height);
                let row = &p.data[sy * p.width..(sy + 1) * p.width];
                let krow = &kernel[(ky as usize) * kw..(ky as usize + 1) * kw];
                for (kx, &kv) in krow.iter().enumerate() {
                    acc += kv * row[reflect(x + kx as isize - rx, p.width)];
                }
            }
            out.data[y as usize * p.width + x as usize] = acc;
        }
    }
    out
}

/// Separable correlation: `kx` along rows, then `ky` along columns.
pub fn convolve_separable(p: &Plane, kx: &[f64], ky: &[f64]) -> Plane {
    let (w, h) = p.dims();
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = Plane::zeros(w, h);
    for y in 0..h {
        let row = &p.data[y * w..(y + 1) * w];
        for x in 0..w as isize {
            let acc: f64 = kx
                .iter()
                .enumerate()
                .map(|(k, &kv)| kv * row[reflect(x + k as isize - rx, w)])
                .sum();
            tmp.data[y * w + x as usize] = acc;
        }
    }
    let mut out = Plane::zeros(w, h);
    for y in 0..h as isize {
        for (k, &kv) in ky.iter().enumerate() {
            let sy = reflect(y + k as isize - ry, h);
            let src = &tmp.data[sy * w..(sy + 1) * w];
            let dst = &mut out.data[y as usize * w..(y as usize + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Normalized 1-D Gaussian truncated at radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

pub fn gaussian_blur(p: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return p.clone();
    }
    let k = gaussian_kernel(sigma);
    convolve_separable(p, &k, &k)
}

/// 3x3 (or any odd `size`) box mean under reflect padding.
pub fn box_filter(p: &Plane, size: usize) -> Plane {
    let k = vec![1.0 / size as f64; size];
    convolve_separable(p, &k, &k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rgb_const(w: usize, h: usize, c: [f64; 3]) -> ImageBuffer {
        ImageBuffer::rgb(
            Plane::filled(w, h, c[0]),
            Plane::filled(w, h, c[1]),
            Plane::filled(w, h, c[2]),
        )
        .unwrap()
    }

    #[test]
    fn grayscale_white_red_identity() {
        let white = to_grayscale(&rgb_const(3, 2, [1.0, 1.0, 1.0]));
        assert!(white.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let red = to_grayscale(&rgb_const(3, 2, [1.0, 0.0, 0.0]));
        assert!(red.data().iter().all(|&v| (v - 0.299).abs() < 1e-12));
        let p = Plane::from_fn(5, 4, |x, y| ((x * 7 + y * 3) % 11) as f64 / 11.0);
        let gray = ImageBuffer::gray(p.clone()).unwrap();
        assert_eq!(to_grayscale(&gray), p);
    }

    #[test]
    fn resize_cases() {
        let p = Plane::from_fn(6, 5, |x, y| (x * y) as f64 / 30.0);
        assert_eq!(p.resize_bilinear(6, 5), p);
        let c = Plane::filled(7, 3, 0.42).resize_bilinear(13, 9);
        assert!(c.data().iter().all(|&v| (v - 0.42).abs() < 1e-12));
        let line = Plane::from_vec(2, 1, vec![0.0, 1.0]).unwrap().resize_bilinear(3, 1);
        assert_eq!(line.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn rejects_bad_channel_counts_and_ranges() {
        let p = Plane::zeros(2, 2);
        assert!(ImageBuffer::from_planes(vec![p.clone(), p.clone()]).is_err());
        assert!(ImageBuffer::gray(Plane::filled(2, 2, 1.5)).is_err());
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(-2, 4), 1);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(5, 4), 2);
        assert_eq!(reflect(9, 4), 1);
        assert_eq!(reflect(-3, 1), 0);
    }

    #[test]
    fn blur_keeps_constants() {
        let p = Plane::filled(9, 4, 0.3);
        let b = gaussian_blur(&p, 2.0);
        assert!(b.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = ImageBuffer::rgb(
            Plane::from_fn(4, 3, |x, _| x as f64 / 3.0),
            Plane::filled(4, 3, 0.0),
            Plane::from_fn(4, 3, |_, y| y as f64 / 2.0),
        )
        .unwrap();
        img.save_png(&path).unwrap();
        let back = ImageBuffer::load(&path).unwrap();
        assert_eq!(back.channels(), 3);
        for c in 0..3 {
            for (a, b) in img.plane(c).data().iter().zip(back.plane(c).data()) {
                assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn resize_preserves_bounds(
            w in 1usize..9, h in 1usize..9, nw in 1usize..17, nh in 1usize..17,
            seed in proptest::collection::vec(0.0f64..1.0, 64)
        ) {
            let p = Plane::from_fn(w, h, |x, y| seed[(y * 8 + x) % 64]);
            let (lo, hi) = p.min_max();
            let r = p.resize_bilinear(nw, nh);
            let (rlo, rhi) = r.min_max();
            prop_assert!(rlo >= lo - 1e-9 && rhi <= hi + 1e-9);
        }
    }
}
