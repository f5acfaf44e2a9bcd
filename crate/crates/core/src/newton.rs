//! Damped Newton root finding with a Levenberg–Marquardt fallback.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::max_abs;

/// A square system `r(x) = 0` with an analytic Jacobian.
pub trait RootProblem {
    fn dim(&self) -> usize;
    fn residual(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Convergence threshold on `‖r‖_∞`.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest step fraction tried by the halving line search.
    pub step_floor: f64,
    pub lm_max_iter: usize,
    /// Initial LM damping relative to the largest diagonal entry of `JᵀJ`.
    pub lm_initial_damping: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
            step_floor: 2f64.powi(-30),
            lm_max_iter: 500,
            lm_initial_damping: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RootSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// `‖r‖_∞` at `x`.
    pub residual_norm: f64,
    /// `‖r‖_∞` after each iteration.
    pub trace: Vec<f64>,
    pub used_fallback: bool,
}

fn sup_norm(r: &DVector<f64>) -> f64 {
    let m = max_abs(r);
    if m.is_nan() {
        f64::INFINITY
    } else {
        m
    }
}

pub fn solve<P: RootProblem + ?Sized>(problem: &P, x0: DVector<f64>, opts: &NewtonOptions) -> Result<RootSolution> {
    let mut x = x0;
    let mut r = problem.residual(&x);
    let mut trace = vec![sup_norm(&r)];
    let mut iterations = 0;

    // Newton phase
    while iterations < opts.max_iter {
        if sup_norm(&r) <= opts.tol {
            return Ok(RootSolution { residual_norm: sup_norm(&r), x, iterations, trace, used_fallback: false });
        }
        let jac = problem.jacobian(&x);
        let Some(step) = jac.lu().solve(&(-&r)) else { break };
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        let norm = r.norm();
        let mut lambda = 1.0;
        let accepted = loop {
            let cand = &x + &step * lambda;
            let cand_r = problem.residual(&cand);
            if cand_r.norm() < norm {
                break Some((cand, cand_r));
            }
            lambda *= 0.5;
            if lambda < opts.step_floor {
                break None;
            }
        };
        iterations += 1;
        match accepted {
            Some((cand, cand_r)) => {
                x = cand;
                r = cand_r;
                trace.push(sup_norm(&r));
            }
            None => break,
        }
    }
    if sup_norm(&r) <= opts.tol {
        return Ok(RootSolution { residual_norm: sup_norm(&r), x, iterations, trace, used_fallback: false });
    }

    let lm = levenberg_marquardt(problem, x, r, trace, iterations, opts);
    if lm.residual_norm <= opts.tol {
        Ok(lm)
    } else {
        Err(Error::NotConverged { residual: lm.residual_norm, iterations: lm.iterations, trace: lm.trace })
    }
}

/// Levenberg–Marquardt on `½‖r‖²` from `x0`. Returns the best point found
/// whether or not it is a root.
pub fn minimize_sum_of_squares<P: RootProblem + ?Sized>(problem: &P, x0: DVector<f64>, opts: &NewtonOptions) -> RootSolution {
    let r = problem.residual(&x0);
    let trace = vec![sup_norm(&r)];
    levenberg_marquardt(problem, x0, r, trace, 0, opts)
}

fn levenberg_marquardt<P: RootProblem + ?Sized>(
    problem: &P,
    mut x: DVector<f64>,
    mut r: DVector<f64>,
    mut trace: Vec<f64>,
    mut iterations: usize,
    opts: &NewtonOptions,
) -> RootSolution {
    let mut damping: Option<f64> = None;
    let mut cost = r.norm_squared();
    for _ in 0..opts.lm_max_iter {
        if sup_norm(&r) <= opts.tol {
            break;
        }
        let jac = problem.jacobian(&x);
        let jtj = jac.tr_mul(&jac);
        let grad = jac.tr_mul(&r);
        let mu = damping.get_or_insert_with(|| {
            opts.lm_initial_damping * jtj.diagonal().iter().fold(0.0_f64, |a, b| a.max(b.abs())).max(1e-300)
        });
        let mut improved = false;
        while *mu < 1e30 {
            let mut lhs = jtj.clone();
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += *mu;
            }
            if let Some(step) = lhs.cholesky().map(|c| c.solve(&(-&grad))) {
                let cand = &x + &step;
                let cand_r = problem.residual(&cand);
                let cand_cost = cand_r.norm_squared();
                if cand_cost < cost {
                    x = cand;
                    r = cand_r;
                    cost = cand_cost;
                    *mu = (*mu / 3.0).max(1e-300);
                    improved = true;
                    break;
                }
            }
            *mu *= 10.0;
        }
        iterations += 1;
        trace.push(sup_norm(&r));
        if !improved {
            break;
        }
    }
    RootSolution { residual_norm: sup_norm(&r), x, iterations, trace, used_fallback: true }
}
