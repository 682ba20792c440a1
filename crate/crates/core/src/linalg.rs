//! Dense complex matrix helpers shared by the operator modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{CmvError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Anything that can be viewed as a dense square complex matrix.
pub trait AsMatrix {
    fn matrix(&self) -> &CMat;
}

impl AsMatrix for CMat {
    fn matrix(&self) -> &CMat {
        self
    }
}

/// Standard basis vector `δ_k` of length `n`.
pub fn basis(n: usize, k: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[k] = ONE;
    v
}

/// `⟨a, b⟩`, antilinear in the first slot.
pub fn inner(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.norm()))
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

/// `‖U*U − I‖_max`.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.nrows();
    let g = u.adjoint() * u;
    max_abs_diff(&g, &CMat::identity(n, n))
}

pub fn diag_matrix(d: &[Complex64]) -> CMat {
    CMat::from_diagonal(&CVec::from_column_slice(d))
}

/// `D·A` for diagonal `D` given by its entries.
pub fn scale_rows(d: &[Complex64], a: &CMat) -> CMat {
    let mut out = a.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

/// `A·D` for diagonal `D` given by its entries.
pub fn scale_cols(a: &CMat, d: &[Complex64]) -> CMat {
    let mut out = a.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= d[j];
    }
    out
}

pub(crate) fn check_square(u: &CMat) -> Result<usize> {
    if u.nrows() != u.ncols() || u.nrows() == 0 {
        return Err(CmvError::Domain(format!(
            "expected a non-empty square matrix, got {}x{}",
            u.nrows(),
            u.ncols()
        )));
    }
    Ok(u.nrows())
}

pub(crate) fn check_index(index: usize, n: usize) -> Result<()> {
    if index >= n {
        return Err(CmvError::Index { index, limit: n });
    }
    Ok(())
}

/// Solves `(U − z) x = rhs`.
pub fn solve_shifted(u: &CMat, z: Complex64, rhs: &CVec) -> Result<CVec> {
    let n = check_square(u)?;
    let mut shifted = u.clone();
    for i in 0..n {
        shifted[(i, i)] -= z;
    }
    shifted
        .lu()
        .solve(rhs)
        .filter(|x| x.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
        .ok_or_else(|| CmvError::Numeric(format!("U - z is singular at z = {z}")))
}
