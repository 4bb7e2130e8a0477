use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Inputs, main output and safety observations of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
}

impl LabeledDataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, z: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.len() || x.nrows() != z.nrows() {
            return Err(Error::Dimension(format!(
                "row counts differ: x {}, y {}, z {}",
                x.nrows(),
                y.len(),
                z.nrows()
            )));
        }
        if x.iter().chain(y.iter()).chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("dataset contains non-finite values".into()));
        }
        Ok(LabeledDataset { x, y, z })
    }

    pub fn empty(dim: usize, n_safety: usize) -> Self {
        LabeledDataset { x: DMatrix::zeros(0, dim), y: DVector::zeros(0), z: DMatrix::zeros(0, n_safety) }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_safety(&self) -> usize {
        self.z.ncols()
    }

    /// Output channel `g`: 0 is the main output, `j >= 1` is safety output `j`.
    pub fn output(&self, g: usize) -> DVector<f64> {
        if g == 0 {
            self.y.clone()
        } else {
            self.z.column(g - 1).into_owned()
        }
    }

    pub fn push(&mut self, x: &[f64], y: f64, z: &[f64]) -> Result<()> {
        if x.len() != self.dim() || z.len() != self.n_safety() {
            return Err(Error::Dimension("point does not match dataset shape".into()));
        }
        let n = self.len();
        self.x = self.x.clone().insert_row(n, 0.0);
        self.x.row_mut(n).copy_from_slice(x);
        self.y = self.y.clone().push(y);
        self.z = self.z.clone().insert_row(n, 0.0);
        self.z.row_mut(n).copy_from_slice(z);
        Ok(())
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn take_first(&self, n: usize) -> LabeledDataset {
        let n = n.min(self.len());
        LabeledDataset { x: self.x.rows(0, n).into_owned(), y: self.y.rows(0, n).into_owned(), z: self.z.rows(0, n).into_owned() }
    }
}
