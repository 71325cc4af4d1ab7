//! Small dense helpers shared by the estimators and the bound computations.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Relative pivot threshold below which a Gram column is treated as dependent.
pub(crate) const PIVOT_RTOL: f64 = 1e-10;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails with [`Error::Conditioning`] naming the first column whose pivot
/// collapses below `PIVOT_RTOL` times its diagonal entry. `labels` maps local
/// column positions to the caller's indices for the error report.
pub(crate) fn cholesky(gram: &DMatrix<f64>, labels: &[usize]) -> Result<DMatrix<f64>> {
    let n = gram.nrows();
    debug_assert_eq!(n, gram.ncols());
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = gram[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        let scale = gram[(j, j)].abs().max(f64::MIN_POSITIVE);
        if !(d > PIVOT_RTOL * scale) {
            let col = labels.get(j).copied().unwrap_or(j);
            return Err(Error::Conditioning { columns: vec![col] });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = gram[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` in place for every column of `b`.
pub(crate) fn cholesky_solve(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub(crate) fn spd_inverse(gram: &DMatrix<f64>, labels: &[usize]) -> Result<DMatrix<f64>> {
    let l = cholesky(gram, labels)?;
    let mut inv = DMatrix::<f64>::identity(gram.nrows(), gram.nrows());
    cholesky_solve(&l, &mut inv);
    // symmetrise away rounding
    let t = inv.transpose();
    Ok((inv + t) * 0.5)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub(crate) fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (f64::NAN, f64::NAN);
    }
    let eig = m.clone().symmetric_eigen();
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub(crate) fn select_columns(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])])
}

/// Minimum-norm least-squares solution through the SVD, used when the normal
/// equations are singular.
pub(crate) fn pinv_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    svd.solve(b, eps)
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), b.ncols()))
}
