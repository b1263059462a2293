//! Square complex and real grids.
//!
//! Both grid types are square with a power-of-two side length and store
//! values in row-major order. Shape is validated once at construction; every
//! operation that combines two grids re-checks that the sides agree.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub(crate) fn check_side(rows: usize, cols: usize) -> Result<usize> {
    if rows != cols {
        return Err(Error::shape(format!("grid must be square, got {rows}x{cols}")));
    }
    if rows == 0 || !rows.is_power_of_two() {
        return Err(Error::shape(format!(
            "grid side must be a positive power of two, got {rows}"
        )));
    }
    Ok(rows)
}

macro_rules! grid_common {
    ($name:ident, $elem:ty) => {
        impl $name {
            /// Builds a grid from row-major values.
            pub fn from_vec(rows: usize, cols: usize, values: Vec<$elem>) -> Result<Self> {
                let side = check_side(rows, cols)?;
                if values.len() != side * side {
                    return Err(Error::shape(format!(
                        "expected {} values for a {side}x{side} grid, got {}",
                        side * side,
                        values.len()
                    )));
                }
                Ok(Self { side, values })
            }

            pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> $elem) -> Result<Self> {
                check_side(side, side)?;
                let values = (0..side * side).map(|i| f(i / side, i % side)).collect();
                Ok(Self { side, values })
            }

            pub fn filled(side: usize, value: $elem) -> Result<Self> {
                check_side(side, side)?;
                Ok(Self {
                    side,
                    values: vec![value; side * side],
                })
            }

            pub fn side(&self) -> usize {
                self.side
            }

            pub fn rows(&self) -> usize {
                self.side
            }

            pub fn cols(&self) -> usize {
                self.side
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn as_slice(&self) -> &[$elem] {
                &self.values
            }

            pub fn as_mut_slice(&mut self) -> &mut [$elem] {
                &mut self.values
            }

            pub fn into_vec(self) -> Vec<$elem> {
                self.values
            }

            pub fn iter(&self) -> std::slice::Iter<'_, $elem> {
                self.values.iter()
            }

            pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
                if self.side != other.side {
                    return Err(Error::shape(format!(
                        "grid sides differ: {} vs {}",
                        self.side, other.side
                    )));
                }
                Ok(())
            }

            pub(crate) fn with_values(&self, values: Vec<$elem>) -> Self {
                debug_assert_eq!(values.len(), self.values.len());
                Self {
                    side: self.side,
                    values,
                }
            }
        }

        impl Index<(usize, usize)> for $name {
            type Output = $elem;

            fn index(&self, (r, c): (usize, usize)) -> &$elem {
                assert!(r < self.side && c < self.side, "index ({r}, {c}) out of bounds");
                &self.values[r * self.side + c]
            }
        }

        impl IndexMut<(usize, usize)> for $name {
            fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut $elem {
                assert!(r < self.side && c < self.side, "index ({r}, {c}) out of bounds");
                &mut self.values[r * self.side + c]
            }
        }
    };
}

/// Complex optical field sampled on one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    side: usize,
    values: Vec<Complex64>,
}

grid_common!(Field, Complex64);

impl Field {
    pub fn zeros(side: usize) -> Result<Self> {
        Self::filled(side, Complex64::new(0.0, 0.0))
    }

    /// Lifts a real grid to a field with zero imaginary part.
    pub fn from_real(grid: &RealGrid) -> Self {
        Field {
            side: grid.side,
            values: grid.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, factor: Complex64) -> Field {
        self.map(|v| v * factor)
    }

    /// Σ|v|², the squared L2 norm.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// αx + βy.
    pub fn linear_combination(
        alpha: Complex64,
        x: &Field,
        beta: Complex64,
        y: &Field,
    ) -> Result<Field> {
        x.ensure_same_shape(y)?;
        Ok(x.with_values(
            x.values
                .iter()
                .zip(&y.values)
                .map(|(&a, &b)| alpha * a + beta * b)
                .collect(),
        ))
    }

    /// Largest |a - b| over all cells.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// Real-valued grid: weights, biases, phase angles, images and intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    side: usize,
    values: Vec<f64>,
}

grid_common!(RealGrid, f64);

impl RealGrid {
    pub fn zeros(side: usize) -> Result<Self> {
        Self::filled(side, 0.0)
    }

    pub fn ones(side: usize) -> Result<Self> {
        Self::filled(side, 1.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealGrid {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_non_negative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }
}
