use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Least-squares fit of every column of `y` on the columns of `x` via a thin
/// Householder QR of `x`.
pub(crate) struct QrSolve {
    pub coef: DMatrix<f64>,
    /// Upper-triangular factor of `x`; `(x'x)^{-1} = r^{-1} r^{-T}`.
    pub r: DMatrix<f64>,
}

/// Columns of `x` that are (numerically) linear combinations of the columns
/// before them.
pub(crate) fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let r = x.clone().qr().r();
    (0..x.ncols())
        .filter(|&j| {
            let norm = x.column(j).norm();
            norm == 0.0 || r[(j, j)].abs() <= 1e-10 * norm.max(1.0) * (x.nrows() as f64).sqrt()
        })
        .collect()
}

pub(crate) fn qr_least_squares(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    names: impl Fn(usize) -> String,
) -> Result<QrSolve> {
    if x.nrows() < x.ncols() {
        return Err(Error::SampleSize(format!(
            "{} observations for {} regressors",
            x.nrows(),
            x.ncols()
        )));
    }
    let bad = dependent_columns(x);
    if !bad.is_empty() {
        let names: Vec<String> = bad.into_iter().map(names).collect();
        return Err(Error::Singular(format!(
            "regressor matrix is rank deficient; collinear columns: {}",
            names.join(", ")
        )));
    }
    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    Ok(QrSolve { coef, r })
}

/// `(x'x)^{-1}` from the R factor of a QR decomposition of `x`.
pub(crate) fn xtx_inverse(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = r.nrows();
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Singular("R factor not invertible".into()))?;
    Ok(&rinv * rinv.transpose())
}

/// Lower Cholesky factor `L` with `a = L L'`.
pub(crate) fn cholesky_lower(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    sym.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

pub(crate) fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    sym.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}
