//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ceiling on the 2-norm condition number of a moment system.
pub const CONDITION_CEILING: f64 = 1e12;

/// Ratio of the largest to the smallest singular value; `inf` when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max.is_finite() && min.is_finite()) {
        return f64::INFINITY;
    }
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `G b = c` (square) or `min ‖G b − c‖₂` (tall), refusing systems
/// whose condition number exceeds [`CONDITION_CEILING`]. Returns the solution
/// and the condition number of `G`.
pub fn solve_moment_system(g: &DMatrix<f64>, c: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let (rows, cols) = g.shape();
    if rows < cols {
        return Err(Error::Dimension(format!(
            "{rows} moment conditions for {cols} coefficients"
        )));
    }
    let condition = condition_number(g);
    if !(condition <= CONDITION_CEILING) {
        return Err(Error::IllConditioned { condition });
    }
    let sol = if rows == cols {
        g.clone().lu().solve(c)
    } else {
        g.clone().svd(true, true).solve(c, 0.0).ok()
    };
    sol.map(|b| (b, condition)).ok_or(Error::IllConditioned { condition })
}

/// `(1/n) Σ_i u_i v_iᵀ` for row-observation matrices `u` (n×p) and `v` (n×q).
pub fn cross_moment(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows() as f64;
    u.tr_mul(v) / n
}

/// Ordinary least squares by Householder QR.
pub fn ols(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, k) = design.shape();
    if n < k {
        return Err(Error::Dimension(format!("{n} rows for {k} regressors")));
    }
    let condition = condition_number(design);
    if !(condition <= CONDITION_CEILING) {
        return Err(Error::IllConditioned { condition });
    }
    let qr = design.clone().qr();
    let qty = qr.q().tr_mul(y);
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or(Error::IllConditioned { condition })
}

/// Column means of an n×k matrix.
pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| if x.is_nan() { f64::NAN } else { acc.max(x.abs()) })
}
