//! Parametric confounding bridge estimation.
//!
//! The outcome bridge `h(W, A, X; b)` is linear in `b` and solves the
//! instrumented moment
//!
//! ```text
//! P_n{ [Y − h(W, A, X; b)] u(Z, A, X) } = 0,
//! ```
//!
//! a linear system `G b = c`. The treatment bridge
//! `q(Z, A, X; t) = 1 + exp{(−1)^{1−A} tᵀu(Z, A, X)}` solves
//!
//! ```text
//! P_n{ (−1)^{1−A} q(Z, A, X; t) m(W, A, X) − [m(W, 1, X) − m(W, 0, X)] } = 0,
//! ```
//!
//! which for the default target `m = (1, W, A, X)` reduces to the constant
//! contrast `(0, 0, 1, 0)`. It is nonlinear in `t` and is solved by damped
//! Newton. Neither fit ever evaluates a propensity score.
//!
//! The treated-effect variants fit on control observations:
//! `h(W, X)` from `P_n{(1 − A)[Y − h] u(Z, X)} = 0` and
//! `q(Z, X) = exp{tᵀu(Z, X)}` from `P_n{[(1 − A) q − A] m(W, X)} = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ProxyDataset;
use crate::error::{Error, Result};
use crate::layout::{build_design, build_design_at, DesignBlock, TermLayout};
use crate::linalg::{self, condition_number, cross_moment, max_abs, solve_moment_system, CONDITION_CEILING};
use crate::newton::{self, NewtonOptions, RootProblem};
use crate::report::FitMeta;

/// Which causal contrast a bridge is parameterized for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeTarget {
    Ate,
    Att,
}

fn sign(a: u8) -> f64 {
    if a == 1 {
        1.0
    } else {
        -1.0
    }
}

// ---------------------------------------------------------------------------
// Outcome bridge

/// Per-observation outcome-bridge moment `w_i u_i (y_i − v_iᵀ b)`, where
/// `w_i = 1` for the ATE and `w_i = 1 − a_i` for the ATT.
#[derive(Debug, Clone)]
pub struct OutcomeMoments {
    /// Instrument rows, n×k_u.
    pub instruments: DMatrix<f64>,
    /// Bridge regressor rows, n×k_h.
    pub regressors: DMatrix<f64>,
    pub y: DVector<f64>,
    pub weights: DVector<f64>,
}

impl OutcomeMoments {
    pub fn new(
        data: &ProxyDataset,
        h_layout: &TermLayout,
        instrument_layout: &TermLayout,
        target: BridgeTarget,
    ) -> Result<Self> {
        let instruments = build_design(data, instrument_layout, DesignBlock::Instrument)?;
        let regressors = build_design(data, h_layout, DesignBlock::OutcomeBridge)?;
        let weights = match target {
            BridgeTarget::Ate => DVector::from_element(data.n(), 1.0),
            BridgeTarget::Att => DVector::from_iterator(data.n(), data.a().iter().map(|&a| f64::from(1 - a))),
        };
        Ok(Self { instruments, regressors, y: DVector::from_column_slice(data.y()), weights })
    }

    fn weighted_instruments(&self) -> DMatrix<f64> {
        let mut u = self.instruments.clone();
        for (i, mut row) in u.row_iter_mut().enumerate() {
            row *= self.weights[i];
        }
        u
    }

    /// `(G, c)` with `G = P_n[w u vᵀ]`, `c = P_n[w u y]`.
    pub fn system(&self) -> (DMatrix<f64>, DVector<f64>) {
        let u = self.weighted_instruments();
        let g = cross_moment(&u, &self.regressors);
        let c = u.tr_mul(&self.y) / self.y.len() as f64;
        (g, c)
    }

    /// Per-observation moments, n×k_u.
    pub fn scores(&self, b: &DVector<f64>) -> DMatrix<f64> {
        let resid = &self.y - &self.regressors * b;
        let mut out = self.instruments.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= self.weights[i] * resid[i];
        }
        out
    }

    /// Moment residual certificate: `‖G b − c‖_∞` when exactly identified,
    /// otherwise the normal-equation residual `‖Gᵀ(G b − c)‖_∞`.
    pub fn residual_norm(&self, b: &DVector<f64>) -> f64 {
        let (g, c) = self.system();
        let r = &g * b - c;
        if g.nrows() == g.ncols() {
            max_abs(&r)
        } else {
            max_abs(&g.tr_mul(&r))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeBridgeFit {
    pub b: DVector<f64>,
    pub layout: TermLayout,
    pub instrument_layout: TermLayout,
    pub target: BridgeTarget,
    pub gram_condition: f64,
    pub residual_moment_norm: f64,
    /// `G` from the fitting system; used to weight over-identified moments.
    pub gram: DMatrix<f64>,
}

impl OutcomeBridgeFit {
    /// `h` at each observation, optionally with the treatment forced.
    pub fn evaluate(&self, data: &ProxyDataset, treatment: Option<u8>) -> Result<DVector<f64>> {
        Ok(build_design_at(data, &self.layout, DesignBlock::OutcomeBridge, treatment)? * &self.b)
    }

    pub fn is_over_identified(&self) -> bool {
        self.instrument_layout.len() > self.layout.len()
    }

    pub fn meta(&self) -> FitMeta {
        FitMeta {
            component: "outcome_bridge".into(),
            iterations: 1,
            residual_norm: self.residual_moment_norm,
            condition: Some(self.gram_condition),
        }
    }

    pub fn record(&self) -> FitRecord {
        FitRecord {
            layout: self.layout.clone(),
            terms: self.layout.term_names(),
            coefficients: self.b.iter().copied().collect(),
            solver_meta: self.meta(),
        }
    }
}

/// Serializable summary `{layout, coefficients, solver_meta}` of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub layout: TermLayout,
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub solver_meta: FitMeta,
}

fn solve_outcome(
    moments: &OutcomeMoments,
    h_layout: &TermLayout,
    instrument_layout: &TermLayout,
    target: BridgeTarget,
) -> Result<OutcomeBridgeFit> {
    let (g, c) = moments.system();
    let (b, gram_condition) = solve_moment_system(&g, &c)?;
    let residual_moment_norm = moments.residual_norm(&b);
    Ok(OutcomeBridgeFit {
        b,
        layout: h_layout.clone(),
        instrument_layout: instrument_layout.clone(),
        target,
        gram_condition,
        residual_moment_norm,
        gram: g,
    })
}

fn check_dimensions(k_u: usize, k_h: usize, rows: usize) -> Result<()> {
    if k_u < k_h {
        return Err(Error::Dimension(format!(
            "instrument dimension {k_u} is smaller than bridge dimension {k_h}"
        )));
    }
    if rows < k_u {
        return Err(Error::Dimension(format!("{rows} observations for {k_u} moment conditions")));
    }
    Ok(())
}

/// Fits `h(W, A, X; b)` from the instrumented moment. Exactly identified
/// systems are solved directly; over-identified ones by identity-weighted
/// least squares.
pub fn fit_outcome_bridge(
    data: &ProxyDataset,
    h_layout: &TermLayout,
    instrument_layout: &TermLayout,
) -> Result<OutcomeBridgeFit> {
    check_dimensions(instrument_layout.len(), h_layout.len(), data.n())?;
    let moments = OutcomeMoments::new(data, h_layout, instrument_layout, BridgeTarget::Ate)?;
    solve_outcome(&moments, h_layout, instrument_layout, BridgeTarget::Ate)
}

fn require_untreated_layout(layout: &TermLayout) -> Result<()> {
    if layout.uses_treatment() {
        return Err(Error::InvalidConfig(
            "treated-effect bridge layouts may not reference the treatment".into(),
        ));
    }
    Ok(())
}

/// Fits the control-group outcome bridge `h(W, X; b)`.
pub fn fit_att_outcome_bridge(
    data: &ProxyDataset,
    h_layout: &TermLayout,
    instrument_layout: &TermLayout,
) -> Result<OutcomeBridgeFit> {
    require_untreated_layout(h_layout)?;
    require_untreated_layout(instrument_layout)?;
    let controls = data.n() - data.n_treated();
    if controls < h_layout.len() {
        return Err(Error::InsufficientControls { have: controls, need: h_layout.len() });
    }
    check_dimensions(instrument_layout.len(), h_layout.len(), controls)?;
    let moments = OutcomeMoments::new(data, h_layout, instrument_layout, BridgeTarget::Att)?;
    solve_outcome(&moments, h_layout, instrument_layout, BridgeTarget::Att)
}

// ---------------------------------------------------------------------------
// Treatment bridge

/// Per-observation treatment-bridge moments and their Jacobian.
#[derive(Debug, Clone)]
pub struct TreatmentMoments {
    /// Bridge regressor rows `u(Z, A, X)`, n×k.
    pub regressors: DMatrix<f64>,
    /// Target rows `m(W, A, X)`, n×k.
    pub targets: DMatrix<f64>,
    /// ATE: `m(W, 1, X) − m(W, 0, X)`; ATT: `a·m(W, X)`. n×k.
    pub offsets: DMatrix<f64>,
    pub a: Vec<u8>,
    pub target: BridgeTarget,
}

impl TreatmentMoments {
    pub fn new(
        data: &ProxyDataset,
        q_layout: &TermLayout,
        target_layout: &TermLayout,
        target: BridgeTarget,
    ) -> Result<Self> {
        let regressors = build_design(data, q_layout, DesignBlock::TreatmentBridge)?;
        let targets = build_design(data, target_layout, DesignBlock::OutcomeBridge)?;
        let offsets = match target {
            BridgeTarget::Ate => {
                build_design_at(data, target_layout, DesignBlock::OutcomeBridge, Some(1))?
                    - build_design_at(data, target_layout, DesignBlock::OutcomeBridge, Some(0))?
            }
            BridgeTarget::Att => {
                let mut m = targets.clone();
                for (i, mut row) in m.row_iter_mut().enumerate() {
                    row *= f64::from(data.a()[i]);
                }
                m
            }
        };
        Ok(Self { regressors, targets, offsets, a: data.a().to_vec(), target })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Bridge values `q_i` at the observed treatment.
    pub fn q_values(&self, t: &DVector<f64>) -> DVector<f64> {
        let eta = &self.regressors * t;
        DVector::from_iterator(
            self.n(),
            eta.iter().zip(&self.a).map(|(&e, &a)| match self.target {
                BridgeTarget::Ate => 1.0 + (sign(a) * e).exp(),
                BridgeTarget::Att => e.exp(),
            }),
        )
    }

    /// Per-row multiplier `c_i` such that the moment is `c_i m_i − offset_i`.
    fn multipliers(&self, t: &DVector<f64>) -> DVector<f64> {
        let q = self.q_values(t);
        DVector::from_iterator(
            self.n(),
            q.iter().zip(&self.a).map(|(&qi, &a)| match self.target {
                BridgeTarget::Ate => sign(a) * qi,
                BridgeTarget::Att => f64::from(1 - a) * qi,
            }),
        )
    }

    /// Per-observation moments, n×k.
    pub fn scores(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let c = self.multipliers(t);
        let mut out = self.targets.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= c[i];
        }
        out - &self.offsets
    }
}

impl TreatmentMoments {
    /// `Σ_k w_k ∇²r_k(t) = P_n[ c''_i (m_iᵀw) u_i u_iᵀ ]`, where `c_i(η)` is the
    /// row multiplier of the moment.
    pub fn curvature(&self, t: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        let eta = &self.regressors * t;
        let mw = &self.targets * w;
        let mut weighted = self.regressors.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            let a = self.a[i];
            let c2 = match self.target {
                BridgeTarget::Ate => sign(a) * (sign(a) * eta[i]).exp(),
                BridgeTarget::Att => f64::from(1 - a) * eta[i].exp(),
            };
            row *= c2 * mw[i];
        }
        cross_moment(&self.regressors, &weighted)
    }
}

/// Gradient of `½‖r(t)‖²` as a root problem, with exact Hessian.
/// Ridge weight of the least-squares fallback. Without it the minimizer can
/// drift along a direction where `exp` saturates and the objective is flat.
pub const LEAST_SQUARES_RIDGE: f64 = 1e-8;

/// Gradient of `½‖r(t)‖² + ½λ‖t‖²` as a root problem.
struct Stationarity<'a>(&'a TreatmentMoments, f64);

impl RootProblem for Stationarity<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn residual(&self, t: &DVector<f64>) -> DVector<f64> {
        self.0.jacobian(t).tr_mul(&self.0.residual(t)) + t * self.1
    }
    fn jacobian(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let j = self.0.jacobian(t);
        let mut h = j.tr_mul(&j) + self.0.curvature(t, &self.0.residual(t));
        for i in 0..h.nrows() {
            h[(i, i)] += self.1;
        }
        h
    }
}

/// Residual `(r(t), √λ t)` whose squared norm is the penalized objective.
struct Penalized<'a>(&'a TreatmentMoments, f64);

impl RootProblem for Penalized<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn residual(&self, t: &DVector<f64>) -> DVector<f64> {
        let r = self.0.residual(t);
        let s = self.1.sqrt();
        DVector::from_iterator(r.len() + t.len(), r.iter().copied().chain(t.iter().map(|v| v * s)))
    }
    fn jacobian(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let j = self.0.jacobian(t);
        let k = t.len();
        let mut out = DMatrix::zeros(j.nrows() + k, k);
        out.rows_mut(0, j.nrows()).copy_from(&j);
        out.rows_mut(j.nrows(), k).fill_diagonal(self.1.sqrt());
        out
    }
}

impl RootProblem for TreatmentMoments {
    fn dim(&self) -> usize {
        self.regressors.ncols()
    }

    fn residual(&self, t: &DVector<f64>) -> DVector<f64> {
        let c = self.multipliers(t);
        let n = self.n() as f64;
        (self.targets.tr_mul(&c) - linalg::column_means(&self.offsets) * n) / n
    }

    /// `J(t) = P_n[ d_i m_i u_iᵀ ]` with `d_i = exp{(−1)^{1−a_i} η_i}` (ATE)
    /// or `(1 − a_i) exp{η_i}` (ATT).
    fn jacobian(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let eta = &self.regressors * t;
        let mut weighted = self.regressors.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            let a = self.a[i];
            let d = match self.target {
                BridgeTarget::Ate => (sign(a) * eta[i]).exp(),
                BridgeTarget::Att => f64::from(1 - a) * eta[i].exp(),
            };
            row *= d;
        }
        cross_moment(&self.targets, &weighted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentBridgeFit {
    pub t: DVector<f64>,
    pub layout: TermLayout,
    pub target_layout: TermLayout,
    pub target: BridgeTarget,
    pub iterations: usize,
    pub final_residual_norm: f64,
    /// `false` when the moment equations have no root and `t` minimizes
    /// `‖P_n m(t)‖² + ridge·‖t‖²` instead.
    pub converged: bool,
    /// Penalty weight of the least-squares fallback; zero for a root.
    #[serde(default)]
    pub ridge: f64,
    pub jacobian_condition: f64,
}

impl TreatmentBridgeFit {
    /// `q` at each observation's own treatment value.
    pub fn evaluate(&self, data: &ProxyDataset) -> Result<DVector<f64>> {
        let moments = TreatmentMoments::new(data, &self.layout, &self.target_layout, self.target)?;
        Ok(moments.q_values(&self.t))
    }

    pub fn meta(&self) -> FitMeta {
        FitMeta {
            component: "treatment_bridge".into(),
            iterations: self.iterations,
            residual_norm: self.final_residual_norm,
            condition: Some(self.jacobian_condition),
        }
    }

    pub fn record(&self) -> FitRecord {
        FitRecord {
            layout: self.layout.clone(),
            terms: self.layout.term_names(),
            coefficients: self.t.iter().copied().collect(),
            solver_meta: self.meta(),
        }
    }
}

fn solve_treatment(
    moments: &TreatmentMoments,
    q_layout: &TermLayout,
    target_layout: &TermLayout,
    target: BridgeTarget,
) -> Result<TreatmentBridgeFit> {
    let k = q_layout.len();
    let opts = NewtonOptions::default();
    let (sol, converged) = match newton::solve(moments, DVector::zeros(k), &opts) {
        Ok(sol) => (sol, true),
        Err(err @ Error::NotConverged { .. }) => match least_squares_solution(moments, &opts) {
            Some(sol) => (sol, false),
            None => return Err(err),
        },
        Err(e) => return Err(e),
    };
    let jacobian_condition = condition_number(&moments.jacobian(&sol.x));
    if converged && !(jacobian_condition <= CONDITION_CEILING) {
        return Err(Error::LocallyUnidentified { condition: jacobian_condition });
    }
    Ok(TreatmentBridgeFit {
        ridge: if converged { 0.0 } else { LEAST_SQUARES_RIDGE },
        final_residual_norm: max_abs(&moments.residual(&sol.x)),
        t: sol.x,
        layout: q_layout.clone(),
        target_layout: target_layout.clone(),
        target,
        iterations: sol.iterations,
        converged,
        jacobian_condition,
    })
}

/// Local minimizer of `‖r(t)‖² + λ‖t‖²` when no root exists: LM from
/// `t = 0`, then Newton on the gradient until it vanishes. `None` unless the
/// end point is a strict local minimum.
fn least_squares_solution(moments: &TreatmentMoments, opts: &NewtonOptions) -> Option<newton::RootSolution> {
    let penalized = Penalized(moments, LEAST_SQUARES_RIDGE);
    let lm = newton::minimize_sum_of_squares(&penalized, DVector::zeros(moments.dim()), opts);
    let stationarity = Stationarity(moments, LEAST_SQUARES_RIDGE);
    let mut polished = newton::solve(&stationarity, lm.x, opts).ok()?;
    stationarity.jacobian(&polished.x).cholesky()?;
    polished.iterations += lm.iterations;
    polished.residual_norm = max_abs(&moments.residual(&polished.x));
    Some(polished)
}

fn check_square(k_q: usize, k_m: usize, rows: usize) -> Result<()> {
    if k_q != k_m {
        return Err(Error::Dimension(format!(
            "target dimension {k_m} differs from treatment-bridge dimension {k_q}"
        )));
    }
    if rows < k_q {
        return Err(Error::Dimension(format!("{rows} observations for {k_q} coefficients")));
    }
    Ok(())
}

/// Fits `q(Z, A, X; t) = 1 + exp{(−1)^{1−A} tᵀu}` starting from `t = 0`.
///
/// Under a misspecified working model the sample equations can lack a root;
/// the fit then returns the least-squares solution with `converged = false`.
pub fn fit_treatment_bridge(
    data: &ProxyDataset,
    q_layout: &TermLayout,
    target_layout: &TermLayout,
) -> Result<TreatmentBridgeFit> {
    check_square(q_layout.len(), target_layout.len(), data.n())?;
    data.require_both_groups()?;
    let moments = TreatmentMoments::new(data, q_layout, target_layout, BridgeTarget::Ate)?;
    solve_treatment(&moments, q_layout, target_layout, BridgeTarget::Ate)
}

/// Fits the control-group odds bridge `q(Z, X; t) = exp{tᵀu}`.
pub fn fit_att_treatment_bridge(
    data: &ProxyDataset,
    q_layout: &TermLayout,
    target_layout: &TermLayout,
) -> Result<TreatmentBridgeFit> {
    require_untreated_layout(q_layout)?;
    require_untreated_layout(target_layout)?;
    check_square(q_layout.len(), target_layout.len(), data.n())?;
    data.require_both_groups()?;
    let moments = TreatmentMoments::new(data, q_layout, target_layout, BridgeTarget::Att)?;
    solve_treatment(&moments, q_layout, target_layout, BridgeTarget::Att)
}
