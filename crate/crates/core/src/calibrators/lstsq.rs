use nalgebra::DMatrix;

/// Relative threshold on the diagonal of R below which a column is treated as
/// linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// Ridge term added to the normalized Gram matrix when the design is rank
/// deficient.
pub(crate) const RIDGE: f64 = 1e-8;

pub(crate) enum Solution {
    Full(DMatrix<f64>),
    RankDeficient,
}

/// Least squares `min ||X b - Y||` for every column of `Y` via Householder QR.
pub(crate) fn qr_solve(design: &DMatrix<f64>, targets: &DMatrix<f64>) -> Solution {
    let k = design.ncols();
    if design.nrows() < k {
        return Solution::RankDeficient;
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if diag_max == 0.0 || (0..k).any(|i| r[(i, i)].abs() <= RANK_TOL * diag_max) {
        return Solution::RankDeficient;
    }
    let mut qtb = targets.clone();
    qr.q_tr_mul(&mut qtb);
    let top = qtb.rows(0, k).into_owned();
    match r.solve_upper_triangular(&top) {
        Some(coef) if coef.iter().all(|c| c.is_finite()) => Solution::Full(coef),
        _ => Solution::RankDeficient,
    }
}

/// `(XᵀX / n + RIDGE·I) b = XᵀY / n`.
pub(crate) fn ridge_solve(design: &DMatrix<f64>, targets: &DMatrix<f64>) -> DMatrix<f64> {
    let n = design.nrows().max(1) as f64;
    let k = design.ncols();
    let gram = design.transpose() * design / n + DMatrix::identity(k, k) * RIDGE;
    let rhs = design.transpose() * targets / n;
    gram.cholesky()
        .expect("ridge-regularized Gram matrix is positive definite")
        .solve(&rhs)
}

pub(crate) fn column(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}

/// Vandermonde design `[1, x, x², …]`, each row scaled by `row_scale`.
pub(crate) fn vandermonde(x: &[f64], degree: usize, row_scale: Option<&[f64]>) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), degree + 1, |i, j| {
        let s = row_scale.map_or(1.0, |w| w[i]);
        s * x[i].powi(j as i32)
    })
}
