//! M-estimation sandwich variance for stacked estimating equations.
//!
//! Nuisance parameters and the target are stacked into one vector `φ` whose
//! per-observation score `H_i(φ)` has empirical mean zero at `φ̂`. The
//! covariance is `A⁻¹ B A⁻ᵀ / n` with `A = P_n[∂H/∂φᵀ]` (central finite
//! differences of the mean score) and `B = P_n[H Hᵀ]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{column_means, condition_number, max_abs, CONDITION_CEILING};

/// Per-observation scores of a stacked estimating equation.
pub trait EstimatingEquations {
    fn dim(&self) -> usize;
    /// Scores at `phi`, one row per observation (n×dim).
    fn scores(&self, phi: &DVector<f64>) -> DMatrix<f64>;
}

impl<F> EstimatingEquations for (usize, F)
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    fn dim(&self) -> usize {
        self.0
    }
    fn scores(&self, phi: &DVector<f64>) -> DMatrix<f64> {
        (self.1)(phi)
    }
}

/// Fitted stack: equations, their root, and which coordinate is the target.
pub struct EstimatingStack<'a> {
    pub equations: Box<dyn EstimatingEquations + 'a>,
    pub phi: DVector<f64>,
    pub target: usize,
}

impl<'a> EstimatingStack<'a> {
    pub fn new(equations: impl EstimatingEquations + 'a, phi: DVector<f64>, target: usize) -> Self {
        Self { equations: Box::new(equations), phi, target }
    }

    pub fn dim(&self) -> usize {
        self.equations.dim()
    }

    /// Sandwich standard error of the target coordinate.
    pub fn target_std_err(&self) -> Result<f64> {
        let cov = sandwich_variance(self)?;
        Ok(cov[(self.target, self.target)].max(0.0).sqrt())
    }
}

/// Relative step for the central-difference bread.
pub const BREAD_STEP: f64 = 1e-6;

/// Mean-score tolerance for accepting `φ` as a root, relative to the mean
/// absolute score.
pub const ROOT_TOL: f64 = 1e-8;

/// `A = P_n[∂H/∂φᵀ]` by central differences with step `1e-6·max(1, |φ_j|)`.
pub fn bread(equations: &dyn EstimatingEquations, phi: &DVector<f64>) -> DMatrix<f64> {
    let k = equations.dim();
    let mut a = DMatrix::zeros(k, k);
    for j in 0..k {
        let h = BREAD_STEP * phi[j].abs().max(1.0);
        let mut up = phi.clone();
        up[j] += h;
        let mut down = phi.clone();
        down[j] -= h;
        let diff = (column_means(&equations.scores(&up)) - column_means(&equations.scores(&down))) / (2.0 * h);
        a.set_column(j, &diff);
    }
    a
}

/// `P_n[H Hᵀ]`.
pub fn meat(scores: &DMatrix<f64>) -> DMatrix<f64> {
    scores.tr_mul(scores) / scores.nrows() as f64
}

pub fn sandwich_variance(stack: &EstimatingStack<'_>) -> Result<DMatrix<f64>> {
    let k = stack.dim();
    if stack.phi.len() != k || stack.target >= k {
        return Err(Error::Dimension(format!(
            "stack of dimension {k} with parameter length {} and target {}",
            stack.phi.len(),
            stack.target
        )));
    }
    let scores = stack.equations.scores(&stack.phi);
    let n = scores.nrows();
    let mean = column_means(&scores);
    let scale = scores.iter().map(|v| v.abs()).sum::<f64>() / (n * k) as f64;
    let norm = max_abs(&mean);
    if !(norm <= ROOT_TOL * scale.max(1.0)) {
        return Err(Error::NotAtRoot { norm });
    }

    let a = bread(stack.equations.as_ref(), &stack.phi);
    let condition = condition_number(&a);
    if !(condition <= CONDITION_CEILING) {
        return Err(Error::SingularBread { condition });
    }
    let a_inv = a.try_inverse().ok_or(Error::SingularBread { condition })?;
    let b = meat(&scores);
    let cov = &a_inv * b * a_inv.transpose() / n as f64;
    Ok((&cov + cov.transpose()) * 0.5)
}
