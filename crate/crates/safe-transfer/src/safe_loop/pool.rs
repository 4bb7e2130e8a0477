use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Finite candidate set; queried points are removed for good.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub x: DMatrix<f64>,
    alive: Vec<bool>,
}

impl Pool {
    pub fn new(x: DMatrix<f64>) -> Self {
        let alive = vec![true; x.nrows()];
        Pool { x, alive }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_alive(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    pub fn is_alive(&self, i: usize) -> bool {
        self.alive.get(i).copied().unwrap_or(false)
    }

    pub fn alive_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|i| self.alive[*i]).collect()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn remove(&mut self, i: usize) -> Result<()> {
        if !self.is_alive(i) {
            return Err(Error::Input(format!("pool index {i} is not available")));
        }
        self.alive[i] = false;
        Ok(())
    }

    /// Rows of the given indices.
    pub fn rows(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), self.dim(), |r, c| self.x[(idx[r], c)])
    }
}
