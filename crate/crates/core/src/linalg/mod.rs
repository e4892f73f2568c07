//! Sparse storage, block operators, direct and Krylov solvers, and the
//! M-matrix / monotonicity checks.

mod block;
mod dense;
mod monotone;
mod solvers;
mod sparse;

pub use block::{BlockOperator, LocalBlock};
pub use dense::Mat;
pub use monotone::{
    inverse_nonneg_check, mmatrix_sign_check, monotonicity_report, MonotonicityReport, SignCheck, INVERSE_TOL,
    SIGN_TOL,
};
pub use solvers::{direct_solve, krylov_solve, KrylovOptions, KrylovStats};
pub use sparse::SparseMatrix;

/// Anything that can be applied to a vector.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

/// `diag(d) + scale * base`.
pub struct ShiftedOperator<'a, A: LinearOperator + ?Sized> {
    pub base: &'a A,
    pub scale: f64,
    pub diag: &'a [f64],
}

impl<A: LinearOperator + ?Sized> LinearOperator for ShiftedOperator<'_, A> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.base.apply(x, y);
        for i in 0..self.diag.len() {
            y[i] = self.diag[i] * x[i] + self.scale * y[i];
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.base.diagonal();
        for (di, m) in d.iter_mut().zip(self.diag) {
            *di = m + self.scale * *di;
        }
        d
    }
}

/// Materialize `diag(d) + scale * a`, keeping every diagonal position.
pub fn shifted_sparse(a: &SparseMatrix, scale: f64, diag: &[f64]) -> SparseMatrix {
    let mut t = Vec::with_capacity(a.nnz() + a.n);
    for i in 0..a.n {
        t.push((i, i, diag[i]));
        for (j, v) in a.row(i) {
            t.push((i, j, scale * v));
        }
    }
    SparseMatrix::from_triplets(a.n, &t)
}
