//! Parameter rasters for loading onto spatial light modulators.
//!
//! Each raster is a 16-byte little-endian header (`"MASK"`, version u32,
//! rows u32, cols u32) followed by row-major f32 values. Every raster gets an
//! 8-bit binary PGM preview next to it.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::RealGrid;
use crate::optics::{Model, ParamKind};

pub const RASTER_MAGIC: [u8; 4] = *b"MASK";
pub const RASTER_VERSION: u32 = 1;

/// Wraps an angle into `[0, 2π)` as an f32, so the stored value itself
/// never rounds up to `2π`.
pub fn wrap_phase(theta: f64) -> f32 {
    let wrapped = theta.rem_euclid(TAU) as f32;
    if wrapped >= TAU as f32 {
        0.0
    } else {
        wrapped
    }
}

pub fn encode_raster(rows: usize, cols: usize, values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * values.len());
    out.extend_from_slice(&RASTER_MAGIC);
    out.extend_from_slice(&RASTER_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// A decoded raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

pub fn decode_raster(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < 16 || bytes[..4] != RASTER_MAGIC {
        return Err(Error::Data("not a MASK raster".into()));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    if word(4) != RASTER_VERSION as usize {
        return Err(Error::Data(format!("unsupported raster version {}", word(4))));
    }
    let (rows, cols) = (word(8), word(12));
    if bytes.len() != 16 + 4 * rows * cols {
        return Err(Error::Data(format!(
            "raster {rows}x{cols} needs {} bytes, file has {}",
            16 + 4 * rows * cols,
            bytes.len()
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Raster { rows, cols, values })
}

/// Binary PGM (P5) with 8-bit levels.
pub fn encode_pgm(rows: usize, cols: usize, levels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(levels);
    out
}

/// Maps wrapped phases linearly from `[0, 2π)` onto `[0, 255]`.
pub fn phase_levels(wrapped: &[f32]) -> Vec<u8> {
    wrapped
        .iter()
        .map(|&t| (t as f64 / TAU * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Min-max normalization onto `[0, 255]`; a constant grid maps to zero.
pub fn min_max_levels(values: &[f32]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = (hi - lo) as f64;
    values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) as f64 / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

fn raster_values(grid: &RealGrid, kind: ParamKind) -> Vec<f32> {
    match kind {
        ParamKind::Phase => grid.iter().map(|&t| wrap_phase(t)).collect(),
        _ => grid.iter().map(|&v| v as f32).collect(),
    }
}

/// Writes a raster and preview for every parameter grid of every layer and
/// returns the paths written, raster before preview.
pub fn export_masks(model: &Model, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let n = model.grid_size();
    let mut written = Vec::new();
    for (l, layer) in model.layers().iter().enumerate() {
        for kind in ParamKind::ALL {
            let values = raster_values(layer.grid(kind), kind);
            let levels = match kind {
                ParamKind::Phase => phase_levels(&values),
                _ => min_max_levels(&values),
            };
            let stem = format!("layer{l}_{}", kind.name());
            for (ext, bytes) in [
                ("mask", encode_raster(n, n, &values)),
                ("pgm", encode_pgm(n, n, &levels)),
            ] {
                let path = out_dir.join(format!("{stem}.{ext}"));
                fs::write(&path, bytes).map_err(|e| Error::file(&path, e))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
