//! Symmetric positive-definite matrices with a cached triangular factor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// A validated symmetric positive-definite matrix.
///
/// Construction factors the matrix once; the lower-triangular factor is kept
/// alongside the entries so log-determinants, solves and quadratic forms are
/// cheap. Stored entries are exactly symmetric. Instances are immutable and
/// safe to share across chain workers.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validate and wrap a symmetric positive-definite matrix.
    ///
    /// Accepts matrices that are symmetric up to roundoff (relative 1e-9) and
    /// stores the exactly symmetrized average. Fails with
    /// `NonPositiveDefinite` when the factorization pivot check fails.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        let p = m.nrows();
        if m.ncols() != p || p == 0 {
            return Err(Error::DimensionMismatch(format!(
                "SPD matrix must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(1.0);
        for i in 0..p {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::DimensionMismatch(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let mut sym = m;
        linalg::symmetrize(&mut sym);
        let chol = linalg::cholesky(&sym)?;
        Ok(SpdMatrix { m: sym, chol })
    }

    pub fn identity(p: usize) -> Self {
        SpdMatrix {
            m: DMatrix::identity(p, p),
            chol: DMatrix::identity(p, p),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Lower-triangular factor `L` with `L L^T` equal to the stored matrix.
    pub fn chol_lower(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        linalg::log_det_from_chol(&self.chol)
    }

    pub fn inverse(&self) -> SpdMatrix {
        let inv = linalg::spd_inverse_from_chol(&self.chol);
        let chol = linalg::cholesky(&inv).expect("inverse of an SPD matrix is SPD");
        SpdMatrix { m: inv, chol }
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .chol
            .solve_lower_triangular(b)
            .expect("factor has positive diagonal");
        self.chol
            .transpose()
            .solve_upper_triangular(&y)
            .expect("factor has positive diagonal")
    }

    /// Quadratic form in the inverse: `x^T A^{-1} x = |L^{-1} x|^2`.
    ///
    /// Nonnegative by construction, which keeps density-generator arguments
    /// in their domain even under roundoff.
    pub fn inv_quad_form(&self, x: &DVector<f64>) -> f64 {
        let y = self
            .chol
            .solve_lower_triangular(x)
            .expect("factor has positive diagonal");
        y.norm_squared()
    }

    /// Trace of `A^{-1} B` for symmetric `B` given as a matrix.
    pub fn inv_trace_product(&self, b: &DMatrix<f64>) -> f64 {
        let x = self
            .chol
            .solve_lower_triangular(b)
            .expect("factor has positive diagonal");
        // tr(A^{-1} B) = tr(L^{-T} L^{-1} B) = tr(L^{-1} B L^{-T})
        let y = self
            .chol
            .solve_lower_triangular(&x.transpose())
            .expect("factor has positive diagonal");
        y.trace()
    }

    /// Sum with another symmetric matrix, revalidated.
    pub fn add_matrix(&self, other: &DMatrix<f64>) -> Result<SpdMatrix> {
        SpdMatrix::from_matrix(&self.m + other)
    }

    /// Positive scalar multiple.
    pub fn scale(&self, c: f64) -> Result<SpdMatrix> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be positive and finite, got {c}"
            )));
        }
        let s = c.sqrt();
        Ok(SpdMatrix {
            m: &self.m * c,
            chol: &self.chol * s,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn random_spd(p: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(11);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let b = DMatrix::from_fn(p, p, |_, _| next());
        let mut a = &b * b.transpose();
        for i in 0..p {
            a[(i, i)] += 0.5 + p as f64;
        }
        a
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.1, 1.0]);
        assert!(SpdMatrix::from_matrix(m).is_err());
    }

    #[test]
    fn rejects_correlation_above_one() {
        // correlation 1.5 with unit variances
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(matches!(
            SpdMatrix::from_matrix(m),
            Err(Error::NonPositiveDefinite { .. })
        ));
    }

    #[test]
    fn solve_and_quad_form_agree() {
        let a = SpdMatrix::from_matrix(random_spd(3, 7)).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let direct = x.dot(&a.solve(&x));
        assert_abs_diff_eq!(a.inv_quad_form(&x), direct, epsilon = 1e-12);
    }

    #[test]
    fn inv_trace_product_matches_explicit() {
        let a = SpdMatrix::from_matrix(random_spd(3, 3)).unwrap();
        let b = random_spd(3, 4);
        let explicit = (a.inverse().matrix() * &b).trace();
        assert_abs_diff_eq!(a.inv_trace_product(&b), explicit, epsilon = 1e-10);
    }

    proptest! {
        #[test]
        fn factor_roundtrip(seed in 0u64..300, dim in 1usize..8) {
            let m = random_spd(dim, seed);
            let a = SpdMatrix::from_matrix(m.clone()).unwrap();
            let rec = a.chol_lower() * a.chol_lower().transpose();
            let scale = m.amax().max(1.0);
            prop_assert!((rec - a.matrix()).amax() <= 1e-12 * scale);
        }

        #[test]
        fn inverse_is_spd_and_correct(seed in 0u64..200, dim in 1usize..6) {
            let a = SpdMatrix::from_matrix(random_spd(dim, seed)).unwrap();
            let prod = a.matrix() * a.inverse().matrix();
            prop_assert!((prod - DMatrix::identity(dim, dim)).amax() < 1e-9);
        }
    }
}
