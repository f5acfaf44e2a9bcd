//! Point estimators with joint sandwich standard errors.
//!
//! Proximal estimators of the ATE:
//!
//! ```text
//! POR  = P_n{ h(W,1,X) − h(W,0,X) }
//! PIPW = P_n{ (−1)^{1−A} q(Z,A,X) Y }
//! PDR  = P_n{ (−1)^{1−A} q(Z,A,X) [Y − h(W,A,X)] + h(W,1,X) − h(W,0,X) }
//! ```
//!
//! and of the ATT, with `p = P_n{A}`:
//!
//! ```text
//! ATT_OR  = P_n{ A [Y − h(W,X)] } / p
//! ATT_IPW = P_n{ A Y − (1 − A) q(Z,X) Y } / p
//! ATT_DR  = P_n{ A Y − (1 − A) q(Z,X) [Y − h(W,X)] − A h(W,X) } / p
//! ```
//!
//! Standard errors stack the nuisance estimating equations with the target
//! equation so nuisance uncertainty propagates.

use nalgebra::{DMatrix, DVector};

use crate::bridge::{
    fit_outcome_bridge, fit_treatment_bridge, BridgeTarget, OutcomeBridgeFit, OutcomeMoments, TreatmentBridgeFit,
    TreatmentMoments,
};
use crate::data::ProxyDataset;
use crate::error::{Error, Result};
use crate::glm::{expit, glm_fit, logistic_scores, GlmKind};
use crate::inference::{EstimatingEquations, EstimatingStack};
use crate::layout::{build_design_at, DesignBlock, Term, TermLayout};
use crate::newton::RootProblem;
use crate::report::{EstimateReport, EstimatorTag, FitMeta};

/// Propensity clamp for the baseline AIPW estimator.
pub const PROPENSITY_CLAMP: (f64, f64) = (0.01, 0.99);

fn sign(a: u8) -> f64 {
    if a == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Summand shared by the proximal DR and the AIPW estimators:
/// `(−1)^{1−a} w (y − m) + m₁ − m₀`, where `w` is `q` or `1/f̂(a|L)`.
#[inline]
pub fn doubly_robust_term(y: f64, a: u8, weight: f64, m_obs: f64, m1: f64, m0: f64) -> f64 {
    sign(a) * weight * (y - m_obs) + (m1 - m0)
}

/// `P_n` of [`doubly_robust_term`] over aligned slices.
pub fn doubly_robust_mean(y: &[f64], a: &[u8], weight: &[f64], m_obs: &[f64], m1: &[f64], m0: &[f64]) -> f64 {
    let n = y.len();
    (0..n)
        .map(|i| doubly_robust_term(y[i], a[i], weight[i], m_obs[i], m1[i], m0[i]))
        .sum::<f64>()
        / n as f64
}

// ---------------------------------------------------------------------------
// Proximal stacks

/// Outcome-bridge block of a stack: moments plus counterfactual designs.
struct OutcomeBlock {
    moments: OutcomeMoments,
    design1: DMatrix<f64>,
    design0: DMatrix<f64>,
    /// `Ĝᵀ` when over-identified, so the block has `k_h` equations.
    weight: Option<DMatrix<f64>>,
}

impl OutcomeBlock {
    fn new(data: &ProxyDataset, fit: &OutcomeBridgeFit) -> Result<Self> {
        let moments = OutcomeMoments::new(data, &fit.layout, &fit.instrument_layout, fit.target)?;
        let (design1, design0) = match fit.target {
            BridgeTarget::Ate => (
                build_design_at(data, &fit.layout, DesignBlock::OutcomeBridge, Some(1))?,
                build_design_at(data, &fit.layout, DesignBlock::OutcomeBridge, Some(0))?,
            ),
            BridgeTarget::Att => (moments.regressors.clone(), moments.regressors.clone()),
        };
        let weight = fit.is_over_identified().then(|| fit.gram.transpose());
        Ok(Self { moments, design1, design0, weight })
    }

    fn dim(&self) -> usize {
        self.moments.regressors.ncols()
    }

    fn scores(&self, b: &DVector<f64>) -> DMatrix<f64> {
        let raw = self.moments.scores(b);
        match &self.weight {
            Some(gt) => raw * gt.transpose(),
            None => raw,
        }
    }
}

/// Treatment-bridge block; `Ĵᵀ`-weighted plus the ridge gradient when the
/// fit is a least-squares solution rather than a root.
struct TreatmentBlock {
    moments: TreatmentMoments,
    weight: Option<DMatrix<f64>>,
    ridge: f64,
}

impl TreatmentBlock {
    fn new(data: &ProxyDataset, fit: &TreatmentBridgeFit) -> Result<Self> {
        let moments = TreatmentMoments::new(data, &fit.layout, &fit.target_layout, fit.target)?;
        let weight = (!fit.converged).then(|| moments.jacobian(&fit.t));
        Ok(Self { moments, weight, ridge: fit.ridge })
    }

    fn scores(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let raw = self.moments.scores(t);
        match &self.weight {
            Some(j) => {
                let mut s = raw * j;
                for mut row in s.row_iter_mut() {
                    row += t.transpose() * self.ridge;
                }
                s
            }
            None => raw,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Contrast {
    Por,
    Pipw,
    Pdr,
    AttOr,
    AttIpw,
    AttDr,
}

impl Contrast {
    fn is_att(self) -> bool {
        matches!(self, Contrast::AttOr | Contrast::AttIpw | Contrast::AttDr)
    }
    fn tag(self) -> EstimatorTag {
        match self {
            Contrast::Por => EstimatorTag::Por,
            Contrast::Pipw => EstimatorTag::Pipw,
            Contrast::Pdr => EstimatorTag::Pdr,
            Contrast::AttOr => EstimatorTag::AttOr,
            Contrast::AttIpw => EstimatorTag::AttIpw,
            Contrast::AttDr => EstimatorTag::AttDr,
        }
    }
}

/// Stacked `(b, t, [p,] target)` estimating equations for one contrast.
struct ProximalStack {
    contrast: Contrast,
    outcome: Option<OutcomeBlock>,
    treatment: Option<TreatmentBlock>,
    y: DVector<f64>,
    a: Vec<u8>,
}

impl ProximalStack {
    fn k_h(&self) -> usize {
        self.outcome.as_ref().map_or(0, OutcomeBlock::dim)
    }
    fn k_q(&self) -> usize {
        self.treatment.as_ref().map_or(0, |t| t.moments.regressors.ncols())
    }

    /// Target summand at `(b, t)` before subtracting the target (and before
    /// dividing by `p` for the ATT contrasts).
    fn target_terms(&self, b: Option<&DVector<f64>>, t: Option<&DVector<f64>>) -> DVector<f64> {
        let n = self.y.len();
        let h = self.outcome.as_ref().zip(b).map(|(o, b)| {
            (&o.moments.regressors * b, &o.design1 * b, &o.design0 * b)
        });
        let q = self.treatment.as_ref().zip(t).map(|(tb, t)| tb.moments.q_values(t));
        DVector::from_fn(n, |i, _| {
            let (y, a) = (self.y[i], self.a[i]);
            let af = f64::from(a);
            match self.contrast {
                Contrast::Por => {
                    let (_, h1, h0) = h.as_ref().unwrap();
                    h1[i] - h0[i]
                }
                Contrast::Pipw => sign(a) * q.as_ref().unwrap()[i] * y,
                Contrast::Pdr => {
                    let (ho, h1, h0) = h.as_ref().unwrap();
                    doubly_robust_term(y, a, q.as_ref().unwrap()[i], ho[i], h1[i], h0[i])
                }
                Contrast::AttOr => af * (y - h.as_ref().unwrap().0[i]),
                Contrast::AttIpw => af * y - (1.0 - af) * q.as_ref().unwrap()[i] * y,
                Contrast::AttDr => {
                    let hi = h.as_ref().unwrap().0[i];
                    af * y - (1.0 - af) * q.as_ref().unwrap()[i] * (y - hi) - af * hi
                }
            }
        })
    }

    fn point_estimate(&self, b: Option<&DVector<f64>>, t: Option<&DVector<f64>>) -> f64 {
        let total = self.target_terms(b, t).sum();
        if self.contrast.is_att() {
            let treated = self.a.iter().filter(|&&a| a == 1).count() as f64;
            total / treated
        } else {
            total / self.y.len() as f64
        }
    }
}

impl EstimatingEquations for ProximalStack {
    fn dim(&self) -> usize {
        self.k_h() + self.k_q() + usize::from(self.contrast.is_att()) + 1
    }

    fn scores(&self, phi: &DVector<f64>) -> DMatrix<f64> {
        let n = self.y.len();
        let (k_h, k_q) = (self.k_h(), self.k_q());
        let b = (k_h > 0).then(|| phi.rows(0, k_h).into_owned());
        let t = (k_q > 0).then(|| phi.rows(k_h, k_q).into_owned());
        let dim = self.dim();
        let target = phi[dim - 1];
        let mut out = DMatrix::zeros(n, dim);
        if let (Some(block), Some(b)) = (&self.outcome, &b) {
            out.columns_mut(0, k_h).copy_from(&block.scores(b));
        }
        if let (Some(tm), Some(t)) = (&self.treatment, &t) {
            out.columns_mut(k_h, k_q).copy_from(&tm.scores(t));
        }
        let terms = self.target_terms(b.as_ref(), t.as_ref());
        if self.contrast.is_att() {
            let p = phi[dim - 2];
            for i in 0..n {
                let af = f64::from(self.a[i]);
                out[(i, dim - 2)] = af - p;
                out[(i, dim - 1)] = (terms[i] - af * target) / p;
            }
        } else {
            for i in 0..n {
                out[(i, dim - 1)] = terms[i] - target;
            }
        }
        out
    }
}

fn proximal_report(
    data: &ProxyDataset,
    contrast: Contrast,
    h_fit: Option<&OutcomeBridgeFit>,
    q_fit: Option<&TreatmentBridgeFit>,
) -> Result<EstimateReport> {
    let outcome = h_fit.map(|f| OutcomeBlock::new(data, f)).transpose()?;
    let treatment = q_fit.map(|f| TreatmentBlock::new(data, f)).transpose()?;
    let stack = ProximalStack {
        contrast,
        outcome,
        treatment,
        y: DVector::from_column_slice(data.y()),
        a: data.a().to_vec(),
    };
    let b = h_fit.map(|f| &f.b);
    let t = q_fit.map(|f| &f.t);
    let estimate = stack.point_estimate(b, t);

    let mut phi: Vec<f64> = Vec::with_capacity(stack.dim());
    if let Some(b) = b {
        phi.extend(b.iter());
    }
    if let Some(t) = t {
        phi.extend(t.iter());
    }
    if contrast.is_att() {
        phi.push(data.n_treated() as f64 / data.n() as f64);
    }
    phi.push(estimate);
    let dim = phi.len();
    let est_stack = EstimatingStack::new(stack, DVector::from_vec(phi), dim - 1);
    let std_err = est_stack.target_std_err()?;

    let meta = h_fit.map(OutcomeBridgeFit::meta).into_iter().chain(q_fit.map(TreatmentBridgeFit::meta)).collect();
    Ok(EstimateReport::new(contrast.tag(), estimate, std_err, data.n(), meta))
}

fn require_ate_fit(h: Option<&OutcomeBridgeFit>, q: Option<&TreatmentBridgeFit>, att: bool) -> Result<()> {
    let want = if att { BridgeTarget::Att } else { BridgeTarget::Ate };
    if h.is_some_and(|h| h.target != want) || q.is_some_and(|q| q.target != want) {
        return Err(Error::InvalidConfig(format!("bridge fit parameterized for the wrong contrast (expected {want:?})")));
    }
    Ok(())
}

/// Proximal outcome regression.
pub fn por(data: &ProxyDataset, h_fit: &OutcomeBridgeFit) -> Result<EstimateReport> {
    require_ate_fit(Some(h_fit), None, false)?;
    proximal_report(data, Contrast::Por, Some(h_fit), None)
}

/// Proximal inverse probability weighting.
pub fn pipw(data: &ProxyDataset, q_fit: &TreatmentBridgeFit) -> Result<EstimateReport> {
    require_ate_fit(None, Some(q_fit), false)?;
    proximal_report(data, Contrast::Pipw, None, Some(q_fit))
}

/// Proximal doubly robust estimator.
pub fn pdr(data: &ProxyDataset, h_fit: &OutcomeBridgeFit, q_fit: &TreatmentBridgeFit) -> Result<EstimateReport> {
    require_ate_fit(Some(h_fit), Some(q_fit), false)?;
    proximal_report(data, Contrast::Pdr, Some(h_fit), Some(q_fit))
}

/// `[ATT_OR, ATT_IPW, ATT_DR]` from control-group bridges.
pub fn att_estimators(
    data: &ProxyDataset,
    h_fit: &OutcomeBridgeFit,
    q_fit: &TreatmentBridgeFit,
) -> Result<[EstimateReport; 3]> {
    require_ate_fit(Some(h_fit), Some(q_fit), true)?;
    if data.n_treated() == 0 {
        return Err(Error::EmptyTreatmentGroup { group: 1 });
    }
    Ok([
        proximal_report(data, Contrast::AttOr, Some(h_fit), None)?,
        proximal_report(data, Contrast::AttIpw, None, Some(q_fit))?,
        proximal_report(data, Contrast::AttDr, Some(h_fit), Some(q_fit))?,
    ])
}

/// Point estimates `(POR, PIPW, PDR)` without standard errors.
pub fn proximal_points(data: &ProxyDataset, h_fit: &OutcomeBridgeFit, q_fit: &TreatmentBridgeFit) -> Result<[f64; 3]> {
    let h_obs = h_fit.evaluate(data, None)?;
    let h1 = h_fit.evaluate(data, Some(1))?;
    let h0 = h_fit.evaluate(data, Some(0))?;
    let q = q_fit.evaluate(data)?;
    let n = data.n() as f64;
    let por = (&h1 - &h0).sum() / n;
    let pipw = data.y().iter().zip(data.a()).zip(q.iter()).map(|((&y, &a), &qi)| sign(a) * qi * y).sum::<f64>() / n;
    let pdr = doubly_robust_mean(data.y(), data.a(), q.as_slice(), h_obs.as_slice(), h1.as_slice(), h0.as_slice());
    Ok([por, pipw, pdr])
}

/// Layouts for the four proximal working models.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximalLayouts {
    pub h: TermLayout,
    pub instrument: TermLayout,
    pub q: TermLayout,
    pub target: TermLayout,
}

impl ProximalLayouts {
    /// `h ~ (1, W, A, X)`, instruments `(1, Z, A, X)`, `q ~ (1, Z, A, X)`,
    /// targets `(1, W, A, X)`.
    pub fn ate_default(data: &ProxyDataset) -> Self {
        Self {
            h: TermLayout::outcome_bridge(data),
            instrument: TermLayout::instrument(data),
            q: TermLayout::treatment_bridge(data),
            target: TermLayout::outcome_bridge(data),
        }
    }

    /// `h ~ (1, W, X)`, instruments `(1, Z, X)`, `q ~ (1, Z, X)`, targets `(1, W, X)`.
    pub fn att_default(data: &ProxyDataset) -> Self {
        Self {
            h: TermLayout::att_outcome_bridge(data),
            instrument: TermLayout::att_treatment_bridge(data),
            q: TermLayout::att_treatment_bridge(data),
            target: TermLayout::att_outcome_bridge(data),
        }
    }
}

/// All three proximal ATE estimators from one pair of bridge fits.
#[derive(Debug, Clone)]
pub struct ProximalAte {
    pub h: OutcomeBridgeFit,
    pub q: TreatmentBridgeFit,
    pub por: EstimateReport,
    pub pipw: EstimateReport,
    pub pdr: EstimateReport,
}

pub fn proximal_ate(data: &ProxyDataset, layouts: &ProximalLayouts) -> Result<ProximalAte> {
    let h = fit_outcome_bridge(data, &layouts.h, &layouts.instrument)?;
    let q = fit_treatment_bridge(data, &layouts.q, &layouts.target)?;
    Ok(ProximalAte {
        por: por(data, &h)?,
        pipw: pipw(data, &q)?,
        pdr: pdr(data, &h, &q)?,
        h,
        q,
    })
}

// ---------------------------------------------------------------------------
// Baseline AIPW

/// Nuisance values of a fitted baseline AIPW estimator.
#[derive(Debug, Clone)]
pub struct AipwNuisance {
    /// Clamped `f̂(A = 1 | L)`.
    pub propensity: DVector<f64>,
    /// `1 / f̂(A_i | L_i)`.
    pub inverse_weight: DVector<f64>,
    pub outcome_obs: DVector<f64>,
    pub outcome1: DVector<f64>,
    pub outcome0: DVector<f64>,
    pub propensity_coefficients: DVector<f64>,
    pub outcome_coefficients: DVector<f64>,
    pub meta: Vec<FitMeta>,
}

fn l_value(data: &ProxyDataset, i: usize, term: Term) -> Result<f64> {
    Ok(match term {
        Term::X(j) if j < data.p_x() => data.x()[(i, j)],
        Term::Z(j) if j < data.p_z() => data.z()[(i, j)],
        Term::W(j) if j < data.p_w() => data.w()[(i, j)],
        _ => {
            return Err(Error::ColumnOutOfRange { term: term.to_string(), block: "covariates".into() });
        }
    })
}

/// `(1, L)` and `(1, A, L)` designs; the latter optionally with `A` forced.
fn aipw_designs(data: &ProxyDataset, l: &[Term], treatment: Option<u8>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = data.n();
    let k = l.len();
    let mut ps = DMatrix::zeros(n, k + 1);
    let mut or = DMatrix::zeros(n, k + 2);
    for i in 0..n {
        ps[(i, 0)] = 1.0;
        or[(i, 0)] = 1.0;
        or[(i, 1)] = f64::from(treatment.unwrap_or(data.a()[i]));
        for (j, &term) in l.iter().enumerate() {
            let v = l_value(data, i, term)?;
            ps[(i, j + 1)] = v;
            or[(i, j + 2)] = v;
        }
    }
    Ok((ps, or))
}

/// Covariate set `L` made of all columns of the chosen blocks, in X, Z, W order.
pub fn covariate_terms(data: &ProxyDataset, x: bool, z: bool, w: bool) -> Vec<Term> {
    let mut out = Vec::new();
    if x {
        out.extend((0..data.p_x()).map(Term::X));
    }
    if z {
        out.extend((0..data.p_z()).map(Term::Z));
    }
    if w {
        out.extend((0..data.p_w()).map(Term::W));
    }
    out
}

fn clamp_propensity(p: f64) -> f64 {
    p.clamp(PROPENSITY_CLAMP.0, PROPENSITY_CLAMP.1)
}

pub fn fit_aipw_nuisance(data: &ProxyDataset, l: &[Term]) -> Result<AipwNuisance> {
    if l.contains(&Term::A) {
        return Err(Error::InvalidConfig("covariate set may not contain the treatment".into()));
    }
    data.require_both_groups()?;
    let (ps_design, or_design) = aipw_designs(data, l, None)?;
    let a = DVector::from_iterator(data.n(), data.a().iter().map(|&v| f64::from(v)));
    let ps_fit = glm_fit(&a, &ps_design, GlmKind::Logistic)?;
    let or_fit = glm_fit(&DVector::from_column_slice(data.y()), &or_design, GlmKind::Linear)?;
    let (_, or1) = aipw_designs(data, l, Some(1))?;
    let (_, or0) = aipw_designs(data, l, Some(0))?;
    let propensity = ps_fit.predict(&ps_design).map(clamp_propensity);
    let inverse_weight = DVector::from_iterator(
        data.n(),
        propensity.iter().zip(data.a()).map(|(&p, &a)| if a == 1 { 1.0 / p } else { 1.0 / (1.0 - p) }),
    );
    let meta = vec![
        FitMeta { component: "propensity".into(), iterations: ps_fit.iterations, residual_norm: 0.0, condition: None },
        FitMeta { component: "outcome_regression".into(), iterations: 1, residual_norm: 0.0, condition: None },
    ];
    Ok(AipwNuisance {
        propensity,
        inverse_weight,
        outcome_obs: or_fit.predict(&or_design),
        outcome1: or_fit.predict(&or1),
        outcome0: or_fit.predict(&or0),
        propensity_coefficients: ps_fit.coefficients,
        outcome_coefficients: or_fit.coefficients,
        meta,
    })
}

struct AipwStack {
    ps_design: DMatrix<f64>,
    or_design: DMatrix<f64>,
    or1: DMatrix<f64>,
    or0: DMatrix<f64>,
    y: DVector<f64>,
    a: Vec<u8>,
}

impl EstimatingEquations for AipwStack {
    fn dim(&self) -> usize {
        self.ps_design.ncols() + self.or_design.ncols() + 1
    }

    fn scores(&self, phi: &DVector<f64>) -> DMatrix<f64> {
        let (kp, ko) = (self.ps_design.ncols(), self.or_design.ncols());
        let beta_p = phi.rows(0, kp).into_owned();
        let beta_o = phi.rows(kp, ko).into_owned();
        let psi = phi[kp + ko];
        let n = self.y.len();
        let af: Vec<f64> = self.a.iter().map(|&v| f64::from(v)).collect();
        let mut out = DMatrix::zeros(n, kp + ko + 1);
        out.columns_mut(0, kp).copy_from(&logistic_scores(&af, &self.ps_design, &beta_p));
        let fitted = &self.or_design * &beta_o;
        let m1 = &self.or1 * &beta_o;
        let m0 = &self.or0 * &beta_o;
        let eta = &self.ps_design * &beta_p;
        for i in 0..n {
            let resid = self.y[i] - fitted[i];
            for j in 0..ko {
                out[(i, kp + j)] = self.or_design[(i, j)] * resid;
            }
            let p = clamp_propensity(expit(eta[i]));
            let w = if self.a[i] == 1 { 1.0 / p } else { 1.0 / (1.0 - p) };
            out[(i, kp + ko)] = doubly_robust_term(self.y[i], self.a[i], w, fitted[i], m1[i], m0[i]) - psi;
        }
        out
    }
}

/// Standard AIPW estimator with logistic propensity and linear outcome
/// regression on covariates `L`; valid only without unmeasured confounding.
pub fn standard_dr(data: &ProxyDataset, l: &[Term]) -> Result<EstimateReport> {
    let nuisance = fit_aipw_nuisance(data, l)?;
    let estimate = doubly_robust_mean(
        data.y(),
        data.a(),
        nuisance.inverse_weight.as_slice(),
        nuisance.outcome_obs.as_slice(),
        nuisance.outcome1.as_slice(),
        nuisance.outcome0.as_slice(),
    );
    let (ps_design, or_design) = aipw_designs(data, l, None)?;
    let (_, or1) = aipw_designs(data, l, Some(1))?;
    let (_, or0) = aipw_designs(data, l, Some(0))?;
    let stack = AipwStack { ps_design, or_design, or1, or0, y: DVector::from_column_slice(data.y()), a: data.a().to_vec() };
    let mut phi: Vec<f64> = nuisance.propensity_coefficients.iter().copied().collect();
    phi.extend(nuisance.outcome_coefficients.iter());
    phi.push(estimate);
    let dim = phi.len();
    let std_err = EstimatingStack::new(stack, DVector::from_vec(phi), dim - 1).target_std_err()?;
    Ok(EstimateReport::new(EstimatorTag::Dr, estimate, std_err, data.n(), nuisance.meta))
}
