//! Independent reference implementations used by the integration tests.
//! Nothing here calls the crate's transforms.

#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::PathBuf;

use conn::optics::{DetectorLayout, Readout};
use conn::{Complex64, Field, RealGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct centered unitary DFT:
/// `X[k] = (1/N) Σ_n x[n] exp(∓2πi ((k1-h)(n1-h) + (k2-h)(n2-h)) / N)`, `h = N/2`.
pub fn dft_centered(x: &Field, inverse: bool) -> Field {
    let n = x.side();
    let h = (n / 2) as f64;
    let sign = if inverse { 1.0 } else { -1.0 };
    let input = x.as_slice();
    Field::from_fn(n, |k1, k2| {
        let mut acc = Complex64::new(0.0, 0.0);
        for n1 in 0..n {
            for n2 in 0..n {
                let arg = ((k1 as f64 - h) * (n1 as f64 - h) + (k2 as f64 - h) * (n2 as f64 - h)) / n as f64;
                acc += input[n1 * n + n2] * Complex64::cis(sign * TAU * arg);
            }
        }
        acc / n as f64
    })
    .unwrap()
}

/// Circular convolution with a 3x3 kernel whose center tap is `kernel[1][1]`.
pub fn circular_convolve_3x3(x: &Field, kernel: &[[f64; 3]; 3]) -> Field {
    let n = x.side() as isize;
    Field::from_fn(x.side(), |r, c| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, row) in kernel.iter().enumerate() {
            for (j, &k) in row.iter().enumerate() {
                let rr = (r as isize - (i as isize - 1)).rem_euclid(n) as usize;
                let cc = (c as isize - (j as isize - 1)).rem_euclid(n) as usize;
                acc += x[(rr, cc)] * k;
            }
        }
        acc
    })
    .unwrap()
}

/// Region sums computed cell by cell.
pub fn region_sums(intensity: &[f64], side: usize, layout: &DetectorLayout) -> Readout {
    std::array::from_fn(|k| {
        let r = layout.regions()[k];
        let mut s = 0.0;
        for row in 0..side {
            for col in 0..side {
                if row >= r.row && row < r.row + r.height && col >= r.col && col < r.col + r.width {
                    s += intensity[row * side + col];
                }
            }
        }
        s
    })
}

pub fn random_field(side: usize, rng: &mut ChaCha8Rng) -> Field {
    Field::from_fn(side, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap()
}

pub fn random_grid(side: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> RealGrid {
    RealGrid::from_fn(side, |_, _| rng.random_range(lo..hi)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_diff(a: &Field, b: &Field) -> f64 {
    a.max_abs_diff(b).unwrap() / b.energy().sqrt().max(f64::MIN_POSITIVE)
}

/// Directory with the canonical MNIST IDX files: `$CONN_MNIST_DIR`, else the
/// workspace `data/mnist`.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("CONN_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn mnist_available() -> bool {
    let dir = mnist_dir();
    [conn::data::TRAIN_IMAGES, conn::data::TRAIN_LABELS, conn::data::TEST_IMAGES, conn::data::TEST_LABELS]
        .iter()
        .all(|f| dir.join(f).is_file())
}
