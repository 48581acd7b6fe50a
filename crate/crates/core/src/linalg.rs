use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff for least-norm solves.
pub const RCOND: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    /// Some singular value fell below `RCOND * sigma_max`.
    pub rank_deficient: bool,
}

/// Minimum-norm least-squares solution of `a x = b` via SVD, discarding
/// singular values below `RCOND * sigma_max`.
pub fn least_norm_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Solution {
    let n = a.ncols();
    if n == 0 {
        return Solution { x: DVector::zeros(0), rank_deficient: false };
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 || !smax.is_finite() {
        return Solution { x: DVector::zeros(n), rank_deficient: true };
    }
    let cutoff = RCOND * smax;
    let rank_deficient = svd.singular_values.iter().any(|&s| s <= cutoff);
    let u = svd.u.as_ref().expect("u computed");
    let v_t = svd.v_t.as_ref().expect("v_t computed");
    let mut coeffs = u.tr_mul(b);
    for (c, &s) in coeffs.iter_mut().zip(svd.singular_values.iter()) {
        *c = if s > cutoff { *c / s } else { 0.0 };
    }
    Solution { x: v_t.tr_mul(&coeffs), rank_deficient }
}

/// Ratio of largest to smallest singular value (infinite when singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
