//! Logistic (IRLS) and linear regression used by the baseline AIPW estimator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Probability clamp applied to fitted logistic values.
pub const PROB_FLOOR: f64 = 1e-12;

const MAX_IRLS_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmKind {
    Logistic,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub coefficients: DVector<f64>,
    pub kind: GlmKind,
    pub converged: bool,
    pub iterations: usize,
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

impl GlmFit {
    /// Fitted means on `design` rows; logistic values are clamped into
    /// `[1e-12, 1 − 1e-12]`.
    pub fn predict(&self, design: &DMatrix<f64>) -> DVector<f64> {
        let eta = design * &self.coefficients;
        match self.kind {
            GlmKind::Linear => eta,
            GlmKind::Logistic => eta.map(|e| expit(e).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)),
        }
    }
}

pub fn glm_fit(response: &DVector<f64>, design: &DMatrix<f64>, kind: GlmKind) -> Result<GlmFit> {
    if response.len() != design.nrows() {
        return Err(Error::Dimension("response length differs from design rows".into()));
    }
    match kind {
        GlmKind::Linear => Ok(GlmFit {
            coefficients: linalg::ols(design, response)?,
            kind,
            converged: true,
            iterations: 1,
        }),
        GlmKind::Logistic => logistic_irls(response, design),
    }
}

fn log_likelihood(y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    // y·η − log(1 + e^η), computed stably
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| yi * e - if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() })
        .sum()
}

fn logistic_irls(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<GlmFit> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::GlmDivergence("logistic response must be 0/1".into()));
    }
    let (n, k) = x.shape();
    if n < k {
        return Err(Error::Dimension(format!("{n} rows for {k} regressors")));
    }
    let mut beta = DVector::zeros(k);
    let mut eta = x * &beta;
    let mut ll = log_likelihood(y, &eta);
    for iter in 1..=MAX_IRLS_ITER {
        let p = eta.map(expit);
        let weights = p.map(|pi| (pi * (1.0 - pi)).max(PROB_FLOOR));
        let score = x.tr_mul(&(y - &p));
        let mut info = DMatrix::zeros(k, k);
        for (i, row) in x.row_iter().enumerate() {
            info.ger(weights[i], &row.transpose(), &row.transpose(), 1.0);
        }
        let step = info
            .clone()
            .cholesky()
            .map(|c| c.solve(&score))
            .or_else(|| info.lu().solve(&score))
            .ok_or_else(|| Error::GlmDivergence("singular information matrix".into()))?;

        let mut scale = 1.0;
        let (new_beta, new_eta, new_ll) = loop {
            let cand = &beta + &step * scale;
            let cand_eta = x * &cand;
            let cand_ll = log_likelihood(y, &cand_eta);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) || scale < 1e-10 {
                break (cand, cand_eta, cand_ll);
            }
            scale *= 0.5;
        };
        let delta = linalg::max_abs(&(&new_beta - &beta));
        let size = linalg::max_abs(&new_beta);
        beta = new_beta;
        eta = new_eta;
        let ll_change = (new_ll - ll).abs();
        ll = new_ll;
        if !size.is_finite() || size > 1e8 {
            return Err(Error::GlmDivergence("coefficients diverging (separation)".into()));
        }
        if delta <= 1e-10 * (1.0 + size) || ll_change <= 1e-14 * (1.0 + ll.abs()) {
            // a log-likelihood pinned at zero means a perfectly separated fit
            if ll > -1e-6 * n as f64 {
                return Err(Error::GlmDivergence("perfect separation".into()));
            }
            return Ok(GlmFit { coefficients: beta, kind: GlmKind::Logistic, converged: true, iterations: iter });
        }
    }
    Err(Error::GlmDivergence(format!("IRLS did not converge in {MAX_IRLS_ITER} iterations")))
}

/// Logistic score contribution `(y − p) x` per row, for stacking.
pub fn logistic_scores(y: &[f64], x: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * beta;
    let mut out = x.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= y[i] - expit(eta[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_balanced_design_has_zero_slope() {
        // x = ±1, each with one success and one failure
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0]);
        let fit = glm_fit(&y, &x, GlmKind::Logistic).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[0].abs() < 1e-12 && fit.coefficients[1].abs() < 1e-12);
    }

    #[test]
    fn linear_three_point() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 3.0]);
        let fit = glm_fit(&y, &x, GlmKind::Linear).unwrap();
        assert!((fit.coefficients[0] + 1.0 / 6.0).abs() < 1e-14);
        assert!((fit.coefficients[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn logistic_recovers_generating_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut x = DMatrix::zeros(n, 2);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let v: f64 = rng.sample(rand_distr::StandardNormal);
            x[(i, 0)] = 1.0;
            x[(i, 1)] = v;
            y[i] = f64::from(rng.random::<f64>() < expit(1.0 - 0.5 * v));
        }
        let fit = glm_fit(&y, &x, GlmKind::Logistic).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 0.05, "{}", fit.coefficients);
        assert!((fit.coefficients[1] + 0.5).abs() < 0.05, "{}", fit.coefficients);
        // score vanishes at the MLE
        let scores = logistic_scores(y.as_slice(), &x, &fit.coefficients);
        assert!(linalg::max_abs(&linalg::column_means(&scores)) < 1e-9);
    }

    #[test]
    fn separation_is_reported() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(glm_fit(&y, &x, GlmKind::Logistic), Err(Error::GlmDivergence(_))));
    }

    #[test]
    fn predictions_are_clamped() {
        let fit = GlmFit {
            coefficients: DVector::from_vec(vec![100.0]),
            kind: GlmKind::Logistic,
            converged: true,
            iterations: 0,
        };
        let p = fit.predict(&DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
        assert!(p[0] < 1.0 && p[1] > 0.0);
    }
}
