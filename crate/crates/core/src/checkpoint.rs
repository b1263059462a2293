//! Binary model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "CONN" | version u32 | layers u32 | grid u32 | activation shift f64
//! per layer: W, B, θ as row-major f64 arrays of grid * grid values
//! CRC32 of every preceding byte
//! ```
//!
//! The detector layout is not stored; loading uses the default layout for
//! the stored grid size.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{CheckpointError, Error, Result};
use crate::field::RealGrid;
use crate::optics::{DetectorLayout, LayerParams, Model};

pub const MAGIC: [u8; 4] = *b"CONN";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;
const CRC_LEN: usize = 4;

/// Largest grid side accepted from a header, to bound allocations.
const MAX_GRID: usize = 1 << 14;

pub fn encode(model: &Model) -> Vec<u8> {
    let n = model.grid_size();
    let mut out = Vec::with_capacity(encoded_len(model.layers().len(), n));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&model.activation_shift().to_le_bytes());
    for layer in model.layers() {
        for grid in [&layer.weight, &layer.bias, &layer.phase] {
            for v in grid.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn encoded_len(layers: usize, grid: usize) -> usize {
    HEADER_LEN + layers * 3 * grid * grid * 8 + CRC_LEN
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn f64_at(bytes: &[u8], offset: usize) -> f64 {
    f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 4 {
        return Err(CheckpointError::Truncated {
            expected: HEADER_LEN + CRC_LEN,
            actual: bytes.len(),
        }
        .into());
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic).into());
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Truncated {
            expected: HEADER_LEN + CRC_LEN,
            actual: bytes.len(),
        }
        .into());
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(CheckpointError::Version {
            expected: VERSION,
            found: version,
        }
        .into());
    }
    let layers = u32_at(bytes, 8) as usize;
    let grid = u32_at(bytes, 12) as usize;
    let shift = f64_at(bytes, 16);
    if layers == 0 || grid == 0 || !grid.is_power_of_two() || grid > MAX_GRID {
        return Err(CheckpointError::Shape(format!("{layers} layers on a {grid} grid")).into());
    }
    let expected = encoded_len(layers, grid);
    match bytes.len() {
        n if n < expected => {
            return Err(CheckpointError::Truncated {
                expected,
                actual: n,
            }
            .into())
        }
        n if n > expected => return Err(CheckpointError::TrailingBytes(n - expected).into()),
        _ => {}
    }
    let stored = u32_at(bytes, expected - CRC_LEN);
    let computed = crc32fast::hash(&bytes[..expected - CRC_LEN]);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed }.into());
    }

    let cells = grid * grid;
    let mut offset = HEADER_LEN;
    let mut next_grid = || {
        let values = (0..cells).map(|i| f64_at(bytes, offset + 8 * i)).collect();
        offset += 8 * cells;
        RealGrid::from_vec(grid, grid, values)
    };
    let stack = (0..layers)
        .map(|_| LayerParams::new(next_grid()?, next_grid()?, next_grid()?))
        .collect::<Result<Vec<_>>>()?;
    let detector = DetectorLayout::default_for(grid)
        .map_err(|e| CheckpointError::Shape(e.to_string()))?;
    Model::new(stack, shift, detector).map_err(|e| CheckpointError::Shape(e.to_string()).into())
}

/// Writes through a temporary sibling and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut file = fs::File::create(tmp).map_err(|e| Error::file(tmp, e))?;
    file.write_all(bytes)
        .and_then(|_| file.sync_all())
        .map_err(|e| Error::file(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| Error::file(path, e))
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode(model))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> Model {
        let mut m = Model::initialize(16, 3, 0.02, 11).unwrap();
        for (l, layer) in m.layers_mut().iter_mut().enumerate() {
            for (i, w) in layer.weight.as_mut_slice().iter_mut().enumerate() {
                *w = 1.0 / (1.0 + i as f64 + l as f64);
            }
            layer.bias.as_mut_slice()[5] = -0.0;
            layer.bias.as_mut_slice()[6] = f64::MIN_POSITIVE;
        }
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample_model();
        let back = decode(&encode(&m)).unwrap();
        for (a, b) in m.layers().iter().zip(back.layers()) {
            for (ga, gb) in [(&a.weight, &b.weight), (&a.bias, &b.bias), (&a.phase, &b.phase)] {
                assert!(ga.iter().zip(gb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
        assert_eq!(back.activation_shift().to_bits(), m.activation_shift().to_bits());
    }

    fn checkpoint_err(bytes: &[u8]) -> CheckpointError {
        match decode(bytes) {
            Err(Error::Checkpoint(e)) => e,
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn corruption_is_classified() {
        let good = encode(&sample_model());

        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(checkpoint_err(&bad), CheckpointError::BadMagic(*b"XONN"));

        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(checkpoint_err(&bad), CheckpointError::Version { found: 9, .. }));

        let short = &good[..good.len() - 100];
        assert_eq!(
            checkpoint_err(short),
            CheckpointError::Truncated {
                expected: good.len(),
                actual: good.len() - 100
            }
        );
        assert!(matches!(checkpoint_err(&good[..10]), CheckpointError::Truncated { .. }));

        let mut long = good.clone();
        long.push(0);
        assert_eq!(checkpoint_err(&long), CheckpointError::TrailingBytes(1));

        let mut flipped = good.clone();
        flipped[HEADER_LEN + 17] ^= 0x40;
        assert!(matches!(checkpoint_err(&flipped), CheckpointError::Checksum { .. }));

        let mut bad_grid = good;
        bad_grid[12] = 12;
        assert!(matches!(checkpoint_err(&bad_grid), CheckpointError::Shape(_)));
    }
}
