//! Dense kernels for small symmetric matrices.
//!
//! Everything here targets meta-analysis dimensions (p up to ~10), so the
//! routines are plain dense loops with no blocking. The Cholesky routine is
//! the single positive-definiteness gate for the whole crate: a pivot below
//! `1e-12 * max(diag)` is an error, never silently jittered.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold for the factorization.
pub const PIVOT_RTOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Only the lower triangle of `a` is read. Fails with `NonPositiveDefinite`
/// when any pivot drops to or below `PIVOT_RTOL * max(diag)`.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    if a.ncols() != p || p == 0 {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let max_diag = (0..p).map(|i| a[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    if !(max_diag > 0.0) {
        return Err(Error::non_pd());
    }
    let tol = PIVOT_RTOL * max_diag;
    let mut l = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol) || !d.is_finite() {
            return Err(Error::non_pd());
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

/// Log-determinant of a symmetric positive-definite matrix via its factor.
pub fn log_det_spd(a: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(log_det_from_chol(&l))
}

/// `2 * sum(log diag(L))` for a lower-triangular factor `L`.
pub fn log_det_from_chol(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Inverse of a symmetric positive-definite matrix.
///
/// Computed as `L^-T L^-1`; the result is symmetrized so the stored entries
/// satisfy the exact-symmetry invariant of downstream types.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = cholesky(a)?;
    Ok(spd_inverse_from_chol(&l))
}

pub(crate) fn spd_inverse_from_chol(l: &DMatrix<f64>) -> DMatrix<f64> {
    let p = l.nrows();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .expect("triangular factor has positive diagonal");
    let mut inv = linv.transpose() * &linv;
    symmetrize(&mut inv);
    inv
}

/// Solve `A x = b` for symmetric positive-definite `A`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let l = cholesky(a)?;
    let y = l
        .solve_lower_triangular(b)
        .ok_or_else(Error::non_pd)?;
    l.transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(Error::non_pd)
}

/// Force exact symmetry by averaging with the transpose in place.
pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let p = a.nrows();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Column-stacking `vec` operator.
pub fn vec_cols(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Half-vectorization: stacks the lower triangle column by column.
pub fn vech(a: &DMatrix<f64>) -> DVector<f64> {
    let p = a.nrows();
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for j in 0..p {
        for i in j..p {
            out.push(a[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

/// Kronecker product `A (x) B`.
pub fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// The duplication matrix `G_p`, satisfying `G_p vech(A) = vec(A)` for every
/// symmetric `A`.
#[derive(Clone, Debug)]
pub struct DuplicationMatrix {
    p: usize,
    m: DMatrix<f64>,
}

impl DuplicationMatrix {
    pub fn new(p: usize) -> Self {
        assert!(p >= 1, "duplication matrix needs p >= 1");
        let cols = p * (p + 1) / 2;
        let mut m = DMatrix::zeros(p * p, cols);
        let mut col = 0;
        for j in 0..p {
            for i in j..p {
                m[(j * p + i, col)] = 1.0;
                m[(i * p + j, col)] = 1.0;
                col += 1;
            }
        }
        DuplicationMatrix { p, m }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `G_p^T M G_p` for a `p^2 x p^2` matrix `M`.
    pub fn project(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.m.transpose() * m * &self.m
    }
}
