//! Dense Cholesky and triangular solves. Matrices are nalgebra types; the
//! heavy kernels run through faer on zero-copy views.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{MatMut, MatRef, Par, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative jitter levels tried, in units of the mean diagonal.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

fn view(a: &DMatrix<f64>) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(a.as_slice(), a.nrows(), a.ncols())
}

fn view_mut(a: &mut DMatrix<f64>) -> MatMut<'_, f64> {
    let (r, c) = a.shape();
    MatMut::from_column_major_slice_mut(a.as_mut_slice(), r, c)
}

fn try_llt(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let llt = view(a).llt(Side::Lower).ok()?;
    let l = llt.L();
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            out[(i, j)] = l[(i, j)];
        }
    }
    if out.iter().all(|v| v.is_finite()) {
        Some(out)
    } else {
        None
    }
}

/// Overwrites `a` with its lower Cholesky factor (upper triangle zeroed).
/// Returns false, leaving `a` in an unspecified state, when `a` is not
/// positive definite. Avoids the copies of [`cholesky_with_jitter`] for very
/// large matrices.
pub fn try_cholesky_in_place(a: &mut DMatrix<f64>) -> bool {
    let n = a.nrows();
    let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
    let stack = MemStack::new(&mut mem);
    if cholesky_in_place(view_mut(a), Default::default(), Par::Seq, stack, Default::default()).is_err() {
        return false;
    }
    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    a.iter().all(|v| v.is_finite())
}

/// Lower Cholesky factor together with the absolute jitter that was added.
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("cholesky of {}x{} matrix", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok((DMatrix::zeros(0, 0), 0.0));
    }
    if let Some(l) = try_llt(a) {
        return Ok((l, 0.0));
    }
    let mean_diag = a.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    for rel in JITTER_LADDER {
        jitter = rel * mean_diag;
        let mut aj = a.clone();
        for i in 0..n {
            aj[(i, i)] += jitter;
        }
        if let Some(l) = try_llt(&aj) {
            return Ok((l, jitter));
        }
    }
    Err(Error::NotPositiveDefinite { jitter })
}

/// `L` with `L L^T = A`, retrying with a jitter ladder before giving up.
pub fn cholesky_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    cholesky_with_jitter(a).map(|(l, _)| l)
}

/// Solves `L X = B` in place.
pub fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    if l.nrows() == 0 || b.ncols() == 0 {
        return;
    }
    solve_lower_triangular_in_place(view(l), view_mut(b), Par::Seq);
}

/// Solves `L^T X = B` in place.
pub fn solve_lower_t_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    if l.nrows() == 0 || b.ncols() == 0 {
        return;
    }
    solve_upper_triangular_in_place(view(l).transpose(), view_mut(b), Par::Seq);
}

pub fn solve_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    solve_lower_in_place(l, &mut x);
    x
}

pub fn solve_lower_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    solve_lower_in_place(l, &mut x);
    DVector::from_column_slice(x.as_slice())
}

pub fn solve_lower_t_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    solve_lower_t_in_place(l, &mut x);
    DVector::from_column_slice(x.as_slice())
}

/// `(L L^T)^{-1} b`.
pub fn chol_solve_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    solve_lower_in_place(l, &mut x);
    solve_lower_t_in_place(l, &mut x);
    DVector::from_column_slice(x.as_slice())
}

/// `(L L^T)^{-1}` from the factor.
pub fn chol_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut x = DMatrix::identity(n, n);
    solve_lower_in_place(l, &mut x);
    let inv = x.transpose() * &x;
    // symmetrize against rounding
    (&inv + inv.transpose()) * 0.5
}

/// `log det(L L^T)`.
pub fn chol_logdet(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}
