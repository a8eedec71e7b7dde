//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative ridge applied to a singular symmetric system: `1e-10 * trace / dim`.
pub const RIDGE_SCALE: f64 = 1e-10;

/// Jacobians with reciprocal condition number below this are treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-14;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn ridge_for(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows().max(1) as f64;
    let scale = (m.trace().abs() / dim).max(f64::MIN_POSITIVE);
    RIDGE_SCALE * scale
}

/// Inverse of a symmetric positive (semi-)definite matrix.
///
/// Tries a Cholesky factorization first. When that fails the ridge
/// `1e-10 * trace / dim` is added and the factorization retried; if the matrix
/// is still not positive definite, eigenvalues below the ridge are floored.
/// The second element carries a warning whenever regularization was needed.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> (DMatrix<f64>, Option<String>) {
    let sym = symmetrize(m);
    if sym.nrows() == 0 {
        return (sym, None);
    }
    if let Some(chol) = sym.clone().cholesky() {
        return (chol.inverse(), None);
    }
    let ridge = ridge_for(&sym);
    let dim = sym.nrows();
    let ridged = &sym + DMatrix::identity(dim, dim) * ridge;
    if let Some(chol) = ridged.clone().cholesky() {
        return (
            chol.inverse(),
            Some(format!("{what}: singular matrix, ridge {ridge:.3e} added before inversion")),
        );
    }
    let eig = SymmetricEigen::new(sym);
    let floor = ridge.max(f64::MIN_POSITIVE);
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v.max(floor));
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    (
        symmetrize(&inv),
        Some(format!("{what}: indefinite matrix, eigenvalues floored at {floor:.3e}")),
    )
}

/// Reciprocal 2-norm condition number from the singular values.
pub fn rcond(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if max <= 0.0 || !max.is_finite() {
        0.0
    } else {
        min / max
    }
}

/// Inverse of a square (not necessarily symmetric) Jacobian, refusing
/// numerically singular input.
pub fn jacobian_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rc = rcond(m);
    if !(rc >= SINGULAR_RCOND) {
        return Err(Error::SingularJacobian { rcond: rc });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::SingularJacobian { rcond: rc })
}

/// Solve `m x = b` for a square Jacobian `m`.
pub fn jacobian_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let rc = rcond(m);
    if !(rc >= SINGULAR_RCOND) {
        return Err(Error::SingularJacobian { rcond: rc });
    }
    m.clone()
        .lu()
        .solve(b)
        .ok_or(Error::SingularJacobian { rcond: rc })
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Indices of a maximal linearly independent prefix-greedy subset of columns.
///
/// Columns are visited left to right; a column is kept when its residual after
/// projection onto the span of the already kept columns has norm above
/// `rel_tol` times its own norm. Modified Gram-Schmidt with one
/// re-orthogonalization pass.
pub fn independent_columns(m: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..m.ncols() {
        let col = m.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            continue;
        }
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let resid = v.norm();
        if resid > rel_tol * norm {
            basis.push(v / resid);
            keep.push(j);
        }
    }
    keep
}

/// Numerical rank via the same greedy procedure.
pub fn column_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    independent_columns(m, rel_tol).len()
}

/// `sum_i w_i x_i x_i^T` accumulated in row order.
pub fn weighted_gram(rows: &DMatrix<f64>, weights: Option<&[f64]>) -> DMatrix<f64> {
    match weights {
        None => rows.transpose() * rows,
        Some(w) => {
            let mut scaled = rows.clone();
            for (i, mut r) in scaled.row_iter_mut().enumerate() {
                r *= w[i];
            }
            rows.transpose() * scaled
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_inverse_plain_and_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (inv, warn) = spd_inverse(&m, "test");
        assert!(warn.is_none());
        let id = &m * &inv;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-12);

        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (inv, warn) = spd_inverse(&s, "gram");
        assert!(warn.unwrap().contains("gram"));
        assert!(inv.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dependent_columns_are_dropped() {
        // x, x^2 with x binary, plus an independent column
        let m = DMatrix::from_row_slice(4, 3, &[0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 0.0, 0.0, 3.0, 1.0, 1.0, 5.0]);
        assert_eq!(independent_columns(&m, 1e-10), vec![0, 2]);
    }

    #[test]
    fn singular_jacobian_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(jacobian_inverse(&m), Err(Error::SingularJacobian { .. })));
    }
}
