use super::SparseMatrix;
use crate::error::{Error, Result};

/// Sign tolerance, relative to the largest matrix entry.
pub const SIGN_TOL: f64 = 1e-13;
/// Smallest acceptable entry of a monotone matrix's computed inverse.
pub const INVERSE_TOL: f64 = -1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SignCheck {
    pub diag_positive: bool,
    pub offdiag_nonpositive: bool,
    pub rowsums_nonnegative: bool,
    pub some_rowsum_positive: bool,
}

impl SignCheck {
    pub fn passes(&self) -> bool {
        self.diag_positive && self.offdiag_nonpositive && self.rowsums_nonnegative && self.some_rowsum_positive
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub sign_check: SignCheck,
    pub inverse_min: Option<f64>,
    /// Largest positive off-diagonal entry, for diagnostics.
    pub max_offdiag: f64,
    pub min_rowsum: f64,
}

impl MonotonicityReport {
    pub fn is_m_matrix(&self) -> bool {
        self.sign_check.passes()
    }

    pub fn verdict(&self) -> &'static str {
        match (self.sign_check.passes(), self.inverse_min) {
            (true, _) => "M-matrix by sign and row-sum conditions",
            (false, Some(m)) if m >= INVERSE_TOL => "monotone (nonnegative inverse), not an M-matrix by sign check",
            (false, Some(_)) => "not monotone",
            (false, None) => "sign check failed; inverse not examined",
        }
    }
}

pub fn mmatrix_sign_check(a: &SparseMatrix) -> MonotonicityReport {
    let scale = a.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = SIGN_TOL * scale;
    let mut sc = SignCheck { diag_positive: true, offdiag_nonpositive: true, rowsums_nonnegative: true, some_rowsum_positive: false };
    let mut max_offdiag = f64::NEG_INFINITY;
    let mut min_rowsum = f64::INFINITY;
    for i in 0..a.n {
        let mut diag = 0.0;
        let mut sum = 0.0;
        for (j, v) in a.row(i) {
            sum += v;
            if j == i {
                diag = v;
            } else {
                max_offdiag = max_offdiag.max(v);
                if v > tol {
                    sc.offdiag_nonpositive = false;
                }
            }
        }
        if diag <= 0.0 {
            sc.diag_positive = false;
        }
        if sum < -tol {
            sc.rowsums_nonnegative = false;
        }
        if sum > tol {
            sc.some_rowsum_positive = true;
        }
        min_rowsum = min_rowsum.min(sum);
    }
    MonotonicityReport { sign_check: sc, inverse_min: None, max_offdiag, min_rowsum }
}

/// Minimum entry of the dense inverse of `a`.
pub fn inverse_nonneg_check(a: &SparseMatrix, n_max: usize) -> Result<f64> {
    if a.n > n_max {
        return Err(Error::TooLarge { n: a.n, limit: n_max });
    }
    let mut m = nalgebra::DMatrix::<f64>::zeros(a.n, a.n);
    for i in 0..a.n {
        for (j, v) in a.row(i) {
            m[(i, j)] = v;
        }
    }
    let inv = m.lu().try_inverse().ok_or(Error::SingularMatrix(0))?;
    Ok(inv.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Sign check plus the dense inverse check when the size allows it.
pub fn monotonicity_report(a: &SparseMatrix, n_max: usize) -> MonotonicityReport {
    let mut r = mmatrix_sign_check(a);
    r.inverse_min = inverse_nonneg_check(a, n_max).ok();
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_tridiagonal() {
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = SparseMatrix::from_triplets(n, &t);
        let r = monotonicity_report(&a, 2000);
        assert!(r.is_m_matrix());
        assert!(r.inverse_min.unwrap() > 0.0);
    }

    #[test]
    fn identity_inverse_min_is_zero() {
        assert_eq!(inverse_nonneg_check(&SparseMatrix::identity(4), 2000).unwrap(), 0.0);
        assert!(matches!(inverse_nonneg_check(&SparseMatrix::identity(5), 4), Err(Error::TooLarge { .. })));
    }
}
