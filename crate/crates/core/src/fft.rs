//! Centered, unitary 2D Fourier transforms and elementwise field products.
//!
//! The spectrum convention puts zero frequency at cell `(N/2, N/2)`: the
//! input is quadrant-swapped before the transform and the output after it.
//! Both directions scale by `1/N` (that is `1/sqrt(rows * cols)`), so
//! [`fft2`] preserves the L2 norm and [`ifft2`] is its adjoint and inverse.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::Result;
use crate::field::{Field, RealGrid};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

type PlanCache = (FftPlanner<f64>, HashMap<usize, Arc<Plans>>);

thread_local! {
    static PLANNER: RefCell<PlanCache> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plans_for(side: usize) -> Arc<Plans> {
    PLANNER.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry(side)
            .or_insert_with(|| {
                Arc::new(Plans {
                    forward: planner.plan_fft(side, FftDirection::Forward),
                    inverse: planner.plan_fft(side, FftDirection::Inverse),
                })
            })
            .clone()
    })
}

/// Swaps diagonal quadrants in place. For even sides this is both
/// `fftshift` and `ifftshift`.
fn swap_quadrants(values: &mut [Complex64], side: usize) {
    let half = side / 2;
    if half == 0 {
        return;
    }
    for r in 0..half {
        for c in 0..side {
            let a = r * side + c;
            let b = (r + half) * side + (c + half) % side;
            values.swap(a, b);
        }
    }
}

fn transpose_square(values: &mut [Complex64], side: usize) {
    for r in 0..side {
        for c in (r + 1)..side {
            values.swap(r * side + c, c * side + r);
        }
    }
}

fn transform_in_place(values: &mut [Complex64], side: usize, direction: FftDirection) {
    let plans = plans_for(side);
    let fft = match direction {
        FftDirection::Forward => &plans.forward,
        FftDirection::Inverse => &plans.inverse,
    };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];

    swap_quadrants(values, side);
    fft.process_with_scratch(values, &mut scratch);
    transpose_square(values, side);
    fft.process_with_scratch(values, &mut scratch);
    transpose_square(values, side);
    swap_quadrants(values, side);

    let norm = 1.0 / side as f64;
    for v in values.iter_mut() {
        *v *= norm;
    }
}

/// Centered unitary forward transform.
pub fn fft2(field: &Field) -> Field {
    let mut out = field.clone();
    fft2_in_place(&mut out);
    out
}

/// Centered unitary inverse transform; exact inverse and adjoint of [`fft2`].
pub fn ifft2(field: &Field) -> Field {
    let mut out = field.clone();
    ifft2_in_place(&mut out);
    out
}

pub fn fft2_in_place(field: &mut Field) {
    let side = field.side();
    transform_in_place(field.as_mut_slice(), side, FftDirection::Forward);
}

pub fn ifft2_in_place(field: &mut Field) {
    let side = field.side();
    transform_in_place(field.as_mut_slice(), side, FftDirection::Inverse);
}

/// Elementwise complex product.
pub fn hadamard(a: &Field, b: &Field) -> Result<Field> {
    a.ensure_same_shape(b)?;
    let values = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .collect();
    Field::from_vec(a.side(), a.side(), values)
}

/// Detected intensity `|v|^2` per cell.
pub fn intensity(field: &Field) -> RealGrid {
    RealGrid::from_vec(
        field.side(),
        field.side(),
        field.iter().map(|v| v.norm_sqr()).collect(),
    )
    .expect("field shape is already valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zeros_stay_zero() {
        let z = Field::zeros(8).unwrap();
        assert_eq!(fft2(&z), z);
        assert_eq!(ifft2(&z), z);
    }

    #[test]
    fn constant_maps_to_centered_dc() {
        let n = 8;
        let value = c(0.75, -1.25);
        let spec = fft2(&Field::filled(n, value).unwrap());
        for r in 0..n {
            for col in 0..n {
                let expected = if (r, col) == (n / 2, n / 2) {
                    value * n as f64
                } else {
                    c(0.0, 0.0)
                };
                assert!((spec[(r, col)] - expected).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn centered_impulse_inverts_to_constant() {
        let mut f = Field::zeros(8).unwrap();
        f[(4, 4)] = c(1.0, 0.0);
        let out = ifft2(&f);
        for v in out.iter() {
            assert!((v - c(0.125, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn side_one_and_two_are_handled() {
        let f = Field::filled(1, c(2.0, 1.0)).unwrap();
        assert_eq!(fft2(&f), f);
        let g = Field::from_vec(2, 2, vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]).unwrap();
        let back = ifft2(&fft2(&g));
        assert!(back.max_abs_diff(&g).unwrap() < 1e-14);
    }

    #[test]
    fn hadamard_identities() {
        let a = Field::from_fn(4, |r, col| c(r as f64, col as f64 - 1.5)).unwrap();
        let ones = Field::filled(4, c(1.0, 0.0)).unwrap();
        let zeros = Field::zeros(4).unwrap();
        assert_eq!(hadamard(&a, &ones).unwrap(), a);
        assert_eq!(hadamard(&a, &zeros).unwrap(), zeros);
        let p = Field::filled(4, c(1.0, 1.0)).unwrap();
        let q = Field::filled(4, c(1.0, -1.0)).unwrap();
        assert!(hadamard(&p, &q).unwrap().iter().all(|&v| v == c(2.0, 0.0)));
        assert!(hadamard(&a, &Field::zeros(8).unwrap()).is_err());
    }

    #[test]
    fn intensity_of_three_four() {
        let f = Field::filled(4, c(3.0, 4.0)).unwrap();
        assert!(intensity(&f).iter().all(|&v| v == 25.0));
        assert!(intensity(&Field::zeros(4).unwrap()).iter().all(|&v| v == 0.0));
        let g = Field::from_fn(8, |r, col| c(r as f64 * 0.3 - 1.0, (col as f64).sin())).unwrap();
        let i = intensity(&g);
        assert!(i.is_non_negative());
        assert!((i.sum() - g.energy()).abs() < 1e-12 * g.energy());
    }
}
