//! Dense least-squares helpers for the small systems used by the propensity
//! and smoothing models.

use nalgebra::{DMatrix, DVector};

/// Row-major design to nalgebra matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

/// Greedy selection of linearly independent columns by modified Gram-Schmidt.
/// A column is dropped when its norm after projection falls below
/// `rel_tol` times its original norm (or it is identically zero).
pub fn independent_columns(w: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..w.ncols() {
        let mut v = w.column(j).into_owned();
        let norm0 = v.norm();
        if norm0 == 0.0 {
            continue;
        }
        for b in &basis {
            let proj = b.dot(&v);
            v.axpy(-proj, b, 1.0);
        }
        let norm = v.norm();
        if norm > rel_tol * norm0 {
            basis.push(v / norm);
            kept.push(j);
        }
    }
    kept
}

/// Residual variance of an ordinary least-squares fit with intercept, computed
/// through an SVD so collinear designs are handled.
pub fn ols_residual_variance(columns: &[Vec<f64>], y: &[f64]) -> Option<f64> {
    let n = y.len();
    let p = columns.len() + 1;
    if n <= p {
        return None;
    }
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let beta = svd.solve(&yv, 1e-10).ok()?;
    let rank = svd.rank(1e-10 * svd.singular_values.max());
    let resid = yv - x * beta;
    let dof = n.saturating_sub(rank).max(1);
    Some(resid.norm_squared() / dof as f64)
}
