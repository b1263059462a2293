//! MNIST ingestion: IDX parsing, amplitude embedding and the train /
//! validation / test split.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, IdxError, Result};
use crate::field::{check_side, RealGrid};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Environment variable naming the directory that holds the IDX files.
pub const DATA_DIR_ENV: &str = "CONN_MNIST_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";

pub const TRAIN_FILE_COUNT: usize = 60_000;
pub const TEST_FILE_COUNT: usize = 10_000;
pub const TRAIN_COUNT: usize = 55_000;
pub const VALIDATION_COUNT: usize = 5_000;

/// Smallest grid an MNIST digit can be embedded on.
pub const MIN_EMBED_GRID: usize = 32;

/// One undecoded image with its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDigit {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub label: u8,
}

/// An embedded image ready for the optical stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: RealGrid,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Ordered digits belonging to one split. Images are embedded on demand so a
/// full split stays at raw-byte size in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    digits: Vec<RawDigit>,
}

impl Dataset {
    pub fn new(split: Split, digits: Vec<RawDigit>) -> Self {
        Dataset { split, digits }
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn digits(&self) -> &[RawDigit] {
        &self.digits
    }

    pub fn label(&self, i: usize) -> usize {
        self.digits[i].label as usize
    }

    /// Embeds digit `i` on an `grid_size`-square grid.
    pub fn sample(&self, i: usize, grid_size: usize) -> Result<Sample> {
        let digit = &self.digits[i];
        Ok(Sample {
            image: embed(digit, grid_size)?,
            label: digit.label as usize,
        })
    }

    /// Keeps only the first `n` digits.
    pub fn truncated(mut self, n: usize) -> Self {
        self.digits.truncate(n);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            expected: offset + 4,
            actual: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(IdxError::BadMagic { expected, found });
    }
    Ok(())
}

fn check_payload(bytes: &[u8], expected: usize) -> Result<(), IdxError> {
    match bytes.len() {
        n if n < expected => Err(IdxError::Truncated {
            expected,
            actual: n,
        }),
        n if n > expected => Err(IdxError::DimensionMismatch(format!(
            "{} bytes beyond the declared payload",
            n - expected
        ))),
        _ => Ok(()),
    }
}

/// Parses an IDX3 image container into `(rows, cols, images)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>), IdxError> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(IdxError::DimensionMismatch(format!("empty image size {rows}x{cols}")));
    }
    let pixels = rows * cols;
    check_payload(bytes, 16 + count * pixels)?;
    let images = bytes[16..].chunks_exact(pixels).map(<[u8]>::to_vec).collect();
    Ok((rows, cols, images))
}

/// Parses an IDX1 label container.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    check_payload(bytes, 8 + count)?;
    let labels = bytes[8..].to_vec();
    if let Some(index) = labels.iter().position(|&l| l > 9) {
        return Err(IdxError::LabelOutOfRange {
            index,
            label: labels[index],
        });
    }
    Ok(labels)
}

/// Pairs parsed images with parsed labels.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Vec<RawDigit>, IdxError> {
    let (rows, cols, images) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if images.len() != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(pixels, label)| RawDigit {
            rows,
            cols,
            pixels,
            label,
        })
        .collect())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::file(path, e))
}

/// Reads an image file and a label file.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<RawDigit>> {
    let images = read_file(images_path.as_ref())?;
    let labels = read_file(labels_path.as_ref())?;
    Ok(parse_idx(&images, &labels)?)
}

/// Encodes digits as an IDX3 image container and an IDX1 label container.
pub fn write_idx(digits: &[RawDigit]) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = digits.first().map_or((28, 28), |d| (d.rows, d.cols));
    if let Some(bad) = digits.iter().position(|d| d.rows != rows || d.cols != cols || d.pixels.len() != rows * cols) {
        return Err(Error::Data(format!("digit {bad} does not share the {rows}x{cols} image size")));
    }
    let count = digits.len() as u32;
    let mut images = Vec::with_capacity(16 + digits.len() * rows * cols);
    images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&count.to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    let mut labels = Vec::with_capacity(8 + digits.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&count.to_be_bytes());
    for d in digits {
        images.extend_from_slice(&d.pixels);
        labels.push(d.label);
    }
    Ok((images, labels))
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Source coordinate and interpolation weight for output index `i` when
/// resampling `src` cells onto `dst` cells with aligned pixel centers.
fn sample_coord(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - lo as f64)
}

/// Embeds a raw digit as an amplitude image on an `N x N` grid.
///
/// Pixels are scaled to `[0, 1]`, bilinearly resized to `3N/4` square and
/// centered, leaving a dark border of `N/8` on every side.
pub fn embed(digit: &RawDigit, grid_size: usize) -> Result<RealGrid> {
    check_side(grid_size, grid_size).map_err(|e| Error::Config(e.to_string()))?;
    if grid_size < MIN_EMBED_GRID {
        return Err(Error::Config(format!(
            "embedding grid must be at least {MIN_EMBED_GRID}, got {grid_size}"
        )));
    }
    if digit.rows == 0 || digit.cols == 0 || digit.pixels.len() != digit.rows * digit.cols {
        return Err(Error::Data(format!(
            "digit holds {} pixels for a {}x{} image",
            digit.pixels.len(),
            digit.rows,
            digit.cols
        )));
    }
    let inner = 3 * grid_size / 4;
    let border = grid_size / 8;
    let px = |r: usize, c: usize| digit.pixels[r * digit.cols + c] as f64 / 255.0;
    let cols: Vec<_> = (0..inner).map(|j| sample_coord(j, digit.cols, inner)).collect();
    let mut grid = RealGrid::zeros(grid_size)?;
    for i in 0..inner {
        let (r0, r1, ty) = sample_coord(i, digit.rows, inner);
        for (j, &(c0, c1, tx)) in cols.iter().enumerate() {
            let top = lerp(px(r0, c0), px(r0, c1), tx);
            let bottom = lerp(px(r1, c0), px(r1, c1), tx);
            grid[(border + i, border + j)] = lerp(top, bottom, ty);
        }
    }
    Ok(grid)
}

/// First 55,000 training-file digits train, the last 5,000 validate, and the
/// test file is the test split. Order is preserved.
pub fn split(train_file: Vec<RawDigit>, test_file: Vec<RawDigit>) -> Result<Splits> {
    if train_file.len() != TRAIN_FILE_COUNT || test_file.len() != TEST_FILE_COUNT {
        return Err(Error::Data(format!(
            "expected {TRAIN_FILE_COUNT} training and {TEST_FILE_COUNT} test digits, got {} and {}",
            train_file.len(),
            test_file.len()
        )));
    }
    let mut train = train_file;
    let validation = train.split_off(TRAIN_COUNT);
    Ok(Splits {
        train: Dataset::new(Split::Train, train),
        validation: Dataset::new(Split::Validation, validation),
        test: Dataset::new(Split::Test, test_file),
    })
}

/// `--data-dir` if given, else `$CONN_MNIST_DIR`, else `data/mnist`.
pub fn resolve_data_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

/// Loads and splits the four canonical MNIST files from `dir`. Missing files
/// are reported together by their expected names.
pub fn load_mnist(dir: &Path) -> Result<Splits> {
    let names = [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS];
    let missing: Vec<String> = names
        .iter()
        .filter(|n| !dir.join(n).is_file())
        .map(|n| n.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingData {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    let train = load_idx(dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS))?;
    let test = load_idx(dir.join(TEST_IMAGES), dir.join(TEST_LABELS))?;
    split(train, test)
}
