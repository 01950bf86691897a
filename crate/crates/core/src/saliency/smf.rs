//! SMF1 saliency map files: magic `SMF1`, little-endian `u32` width and
//! height, then `width * height` little-endian `f32` values, row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::Plane;

use super::SaliencyMap;

pub const SMF_MAGIC: &[u8; 4] = b"SMF1";

pub fn encode_smf(map: &SaliencyMap) -> Vec<u8> {
    let p = map.plane();
    let mut out = Vec::with_capacity(12 + 4 * p.len());
    out.extend_from_slice(SMF_MAGIC);
    out.extend_from_slice(&(p.width() as u32).to_le_bytes());
    out.extend_from_slice(&(p.height() as u32).to_le_bytes());
    for &v in p.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_smf(model_id: &str, bytes: &[u8]) -> Result<SaliencyMap> {
    if bytes.len() < 12 || &bytes[..4] != SMF_MAGIC {
        return Err(Error::Format("not an SMF1 file".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| Error::Format("SMF1 dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "SMF1 size mismatch: {} bytes for {w}x{h}",
            bytes.len()
        )));
    }
    let values = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    SaliencyMap::from_plane(model_id, Plane::from_vec(w, h, values)?)
}

pub fn write_smf(path: &Path, map: &SaliencyMap) -> Result<()> {
    crate::util::write_atomic(path, &encode_smf(map))
}

pub fn read_smf(path: &Path, model_id: &str) -> Result<SaliencyMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_smf(model_id, &bytes)
}

/// 16-bit grayscale PNG for visual inspection.
pub fn write_png16(path: &Path, map: &SaliencyMap) -> Result<()> {
    let p = map.plane();
    let buf: Vec<u16> = p.data().iter().map(|&v| (v * 65535.0).round() as u16).collect();
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(p.width() as u32, p.height() as u32, buf)
        .ok_or_else(|| Error::Format("png buffer size".into()))?;
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
