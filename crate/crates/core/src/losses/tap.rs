use crate::error::{invalid, Result};
use crate::model::Real;

/// A real `rows x cols` matrix, row-major, with one row per
/// time-frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct TapGrid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl TapGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid!(
                "tap buffer holds {} values, expected {rows}x{cols}",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_real<T: Real>(rows: usize, cols: usize, data: &[T]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|v| v.as_f64()).collect())
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_real<T: Real>(&self) -> Vec<T> {
        self.data.iter().map(|v| T::from_f64(*v)).collect()
    }

    pub(crate) fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("{what} contains non-finite values"));
        }
        Ok(())
    }
}
