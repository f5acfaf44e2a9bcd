//! Data-generating mechanisms for the simulation studies.
//!
//! The main mechanism draws, per observation and in this order,
//!
//! ```text
//! X ~ N(Γ_x, σ_x² I)
//! A | X ~ Bernoulli(π(X))
//! (Z, W, U) | A, X ~ N((α₀ + α_a A + α_xᵀX, μ₀ + μ_a A + μ_xᵀX, κ₀ + κ_a A + κ_xᵀX), Σ)
//! Y = b₀ + b_a A + b_xᵀX + (b_w − ω) E[W | U, X] + ω W + N(0, σ_y²)
//! ```
//!
//! with `E[W | U, X] = μ₀ + μ_xᵀX + (σ_wu/σ_u²)(U − κ₀ − κ_xᵀX)`. Under the
//! two covariance constraints checked by [`SimConfig::validate`], `W` is
//! independent of `(A, Z)` given `(U, X)`, `h(W, A, X) = b₀ + b_a A + b_w W +
//! b_xᵀX` is the outcome bridge, and `q` of the treatment-bridge working
//! model holds with coefficients from [`derive_params`].

use nalgebra::{DMatrix, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::ProxyDataset;
use crate::error::{Error, Result};
use crate::glm::expit;

/// Tolerance for the structural constraints on a configuration.
pub const CONSTRAINT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityMode {
    /// Closed-form `Pr(A = 1 | X)` under which the treatment-bridge working
    /// model is exactly correct.
    BridgeConsistent,
    /// `Pr(A = 1 | X) = [1 + exp{logistic_xᵀX}]⁻¹`.
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub gamma_x: Vec<f64>,
    pub sigma_x: f64,
    pub alpha_0: f64,
    pub alpha_a: f64,
    pub alpha_x: Vec<f64>,
    pub mu_0: f64,
    pub mu_a: f64,
    pub mu_x: Vec<f64>,
    pub kappa_0: f64,
    pub kappa_a: f64,
    pub kappa_x: Vec<f64>,
    /// Covariance of `(Z, W, U)` given `(A, X)`.
    pub sigma: [[f64; 3]; 3],
    pub b_0: f64,
    pub b_a: f64,
    pub b_x: Vec<f64>,
    pub b_w: f64,
    pub omega: f64,
    pub sigma_y: f64,
    /// Treatment-bridge intercept and covariate slopes (free parameters).
    pub t_0: f64,
    pub t_x: Vec<f64>,
    pub propensity_mode: PropensityMode,
    /// Slopes used by [`PropensityMode::Logistic`].
    pub logistic_x: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::main_design()
    }
}

impl SimConfig {
    /// Main simulation design.
    pub fn main_design() -> Self {
        let q = vec![0.25, 0.25];
        Self {
            gamma_x: q.clone(),
            sigma_x: 0.25,
            alpha_0: 0.25,
            alpha_a: 0.25,
            alpha_x: q.clone(),
            mu_0: 0.25,
            mu_a: 0.125,
            mu_x: q.clone(),
            kappa_0: 0.25,
            kappa_a: 0.25,
            kappa_x: q.clone(),
            sigma: [[1.0, 0.25, 0.5], [0.25, 1.0, 0.5], [0.5, 0.5, 1.0]],
            b_0: 2.0,
            b_a: 2.0,
            b_x: q.clone(),
            b_w: 4.0,
            omega: 2.0,
            sigma_y: 0.25,
            t_0: 0.25,
            t_x: q,
            propensity_mode: PropensityMode::BridgeConsistent,
            logistic_x: vec![0.125, 0.125],
            n: 2000,
            seed: 1,
        }
    }

    /// `U` does not affect treatment (`κ_a = μ_a = 0`).
    pub fn no_confounding() -> Self {
        Self { mu_a: 0.0, kappa_a: 0.0, ..Self::main_design() }
    }

    /// Weaker `Z`–`W` association (`σ_zw = 0.15`, `σ_wu = 0.3`, `μ_a = 0.075`).
    pub fn weak_proxy() -> Self {
        Self {
            mu_a: 0.075,
            sigma: [[1.0, 0.15, 0.5], [0.15, 1.0, 0.3], [0.5, 0.3, 1.0]],
            ..Self::main_design()
        }
    }

    pub fn p_x(&self) -> usize {
        self.gamma_x.len()
    }

    fn s_z2(&self) -> f64 {
        self.sigma[0][0]
    }
    fn s_zw(&self) -> f64 {
        self.sigma[0][1]
    }
    fn s_zu(&self) -> f64 {
        self.sigma[0][2]
    }
    fn s_w2(&self) -> f64 {
        self.sigma[1][1]
    }
    fn s_wu(&self) -> f64 {
        self.sigma[1][2]
    }
    fn s_u2(&self) -> f64 {
        self.sigma[2][2]
    }

    /// `σ_zw σ_u² − σ_wu σ_zu` (zero when `W ⊥ Z | U, A, X`).
    pub fn constraint_c1(&self) -> f64 {
        self.s_zw() * self.s_u2() - self.s_wu() * self.s_zu()
    }

    /// `μ_a σ_u² − σ_wu κ_a` (zero when `W ⊥ A | U, X`).
    pub fn constraint_c2(&self) -> f64 {
        self.mu_a * self.s_u2() - self.s_wu() * self.kappa_a
    }

    pub fn cholesky(&self) -> Option<Matrix3<f64>> {
        let m = Matrix3::from_fn(|i, j| self.sigma[i][j]);
        m.cholesky().map(|c| c.l())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let p = self.p_x();
        for (name, v) in [
            ("alpha_x", &self.alpha_x),
            ("mu_x", &self.mu_x),
            ("kappa_x", &self.kappa_x),
            ("b_x", &self.b_x),
            ("t_x", &self.t_x),
        ] {
            if v.len() != p {
                return bad(format!("{name} has length {}, gamma_x has {p}", v.len()));
            }
        }
        if self.propensity_mode == PropensityMode::Logistic && self.logistic_x.len() != p {
            return bad(format!("logistic_x has length {}, gamma_x has {p}", self.logistic_x.len()));
        }
        if !(self.sigma_x > 0.0) || !(self.sigma_y >= 0.0) {
            return bad("sigma_x must be positive and sigma_y nonnegative".into());
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        for i in 0..3 {
            for j in 0..3 {
                if (self.sigma[i][j] - self.sigma[j][i]).abs() > CONSTRAINT_TOL {
                    return bad("Sigma is not symmetric".into());
                }
            }
        }
        if self.cholesky().is_none() {
            return bad("Sigma is not positive definite".into());
        }
        if self.constraint_c1().abs() > CONSTRAINT_TOL {
            return bad(format!("constraint sigma_zw*sigma_u^2 = sigma_wu*sigma_zu violated by {:.3e}", self.constraint_c1()));
        }
        if self.constraint_c2().abs() > CONSTRAINT_TOL {
            return bad(format!("constraint mu_a*sigma_u^2 = sigma_wu*kappa_a violated by {:.3e}", self.constraint_c2()));
        }
        let d = derive_params(self, self.t_0, &self.t_x)?;
        let lhs = d.t_z * d.theta_u * d.sigma2_u_given_wax;
        let rhs = -(self.kappa_a - self.s_wu() * self.mu_a / self.s_w2());
        if (lhs - rhs).abs() > CONSTRAINT_TOL {
            return bad("treatment-bridge slope identity violated".into());
        }
        let ta = -d.t_z * d.t_z * d.sigma2_z_given_uax - d.t_z * d.theta_a;
        if (ta - d.t_a).abs() > CONSTRAINT_TOL {
            return bad("treatment-bridge intercept identity violated".into());
        }
        Ok(())
    }

    /// Loads a JSON configuration and validates it.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Quantities implied by a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub theta_0: f64,
    pub theta_a: f64,
    pub theta_x: Vec<f64>,
    pub theta_u: f64,
    pub sigma2_z_given_uax: f64,
    pub sigma2_u_given_wax: f64,
    pub t_0: f64,
    pub t_z: f64,
    pub t_a: f64,
    pub t_x: Vec<f64>,
    /// True outcome-bridge coefficients `(b₀, b_a, b_w, b_x)`.
    pub b_0: f64,
    pub b_a: f64,
    pub b_w: f64,
    pub b_x: Vec<f64>,
    pub psi_true: f64,
}

/// Regression of `Z` on `(U, A, X)`, conditional variances, and the implied
/// treatment-bridge slopes `t_z`, `t_a`.
pub fn derive_params(config: &SimConfig, t_0: f64, t_x: &[f64]) -> Result<DerivedParams> {
    let s_u2 = config.s_u2();
    if !(s_u2 > 0.0) {
        return Err(Error::InvalidConfig("sigma_u^2 must be positive".into()));
    }
    let theta_u = config.s_zu() / s_u2;
    if theta_u == 0.0 {
        return Err(Error::InvalidConfig("Z carries no U signal (sigma_zu = 0): bridge truth undefined".into()));
    }
    let theta_0 = config.alpha_0 - theta_u * config.kappa_0;
    let theta_a = config.alpha_a - theta_u * config.kappa_a;
    let theta_x = config.alpha_x.iter().zip(&config.kappa_x).map(|(a, k)| a - theta_u * k).collect();
    let sigma2_z_given_uax = config.s_z2() * (1.0 - config.s_zu().powi(2) / (config.s_z2() * s_u2));
    let sigma2_u_given_wax = s_u2 * (1.0 - config.s_wu().powi(2) / (s_u2 * config.s_w2()));
    let t_z = -(config.kappa_a - config.s_wu() * config.mu_a / config.s_w2()) / (theta_u * sigma2_u_given_wax);
    let t_a = -t_z * t_z * sigma2_z_given_uax - t_z * theta_a;
    Ok(DerivedParams {
        theta_0,
        theta_a,
        theta_x,
        theta_u,
        sigma2_z_given_uax,
        sigma2_u_given_wax,
        t_0,
        t_z,
        t_a,
        t_x: t_x.to_vec(),
        b_0: config.b_0,
        b_a: config.b_a,
        b_w: config.b_w,
        b_x: config.b_x.clone(),
        psi_true: config.b_a,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Pr(A = 1 | X = x)` under the configured propensity mode.
pub fn propensity(config: &SimConfig, derived: &DerivedParams, x: &[f64]) -> f64 {
    match config.propensity_mode {
        PropensityMode::Logistic => 1.0 / (1.0 + dot(&config.logistic_x, x).exp()),
        PropensityMode::BridgeConsistent => {
            let d = derived;
            let tz = d.t_z;
            let exponent = d.t_0
                + d.t_a
                + dot(&d.t_x, x)
                + tz * (d.theta_0 + d.theta_a + dot(&d.theta_x, x))
                + tz * tz * d.sigma2_z_given_uax / 2.0
                + tz * d.theta_u * (config.kappa_0 + config.kappa_a + dot(&config.kappa_x, x))
                + config.s_u2() * tz * tz * d.theta_u * d.theta_u / 2.0;
            1.0 / (1.0 + exponent.exp())
        }
    }
}

/// A simulated dataset with its latent confounder (and, where the mechanism
/// defines them, both potential outcomes).
#[derive(Debug, Clone)]
pub struct SimDraw {
    pub data: ProxyDataset,
    pub u: Vec<f64>,
    pub potential_outcomes: Option<(Vec<f64>, Vec<f64>)>,
}

/// Random stream for replication `rep` of base seed `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Draws `config.n` observations from the main mechanism using stream 0.
pub fn simulate(config: &SimConfig) -> Result<SimDraw> {
    simulate_replication(config, 0)
}

/// Draws replication `rep`; each replication has an independent stream.
pub fn simulate_replication(config: &SimConfig, rep: u64) -> Result<SimDraw> {
    config.validate()?;
    let derived = derive_params(config, config.t_0, &config.t_x)?;
    let chol = config.cholesky().expect("validated");
    let mut rng = replication_rng(config.seed, rep);
    let (n, p) = (config.n, config.p_x());
    let mut x = DMatrix::zeros(n, p);
    let mut z = DMatrix::zeros(n, 1);
    let mut w = DMatrix::zeros(n, 1);
    let mut u = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut xi = vec![0.0; p];
    let slope_wu = config.s_wu() / config.s_u2();
    for i in 0..n {
        for (j, g) in config.gamma_x.iter().enumerate() {
            xi[j] = g + config.sigma_x * rng.sample::<f64, _>(StandardNormal);
            x[(i, j)] = xi[j];
        }
        let ai = u8::from(rng.random::<f64>() < propensity(config, &derived, &xi));
        let af = f64::from(ai);
        let eps = nalgebra::Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = chol * eps;
        let zi = config.alpha_0 + config.alpha_a * af + dot(&config.alpha_x, &xi) + noise[0];
        let wi = config.mu_0 + config.mu_a * af + dot(&config.mu_x, &xi) + noise[1];
        let ui = config.kappa_0 + config.kappa_a * af + dot(&config.kappa_x, &xi) + noise[2];
        let e_w_ux = config.mu_0 + dot(&config.mu_x, &xi) + slope_wu * (ui - config.kappa_0 - dot(&config.kappa_x, &xi));
        let yi = config.b_0
            + config.b_a * af
            + dot(&config.b_x, &xi)
            + (config.b_w - config.omega) * e_w_ux
            + config.omega * wi
            + config.sigma_y * rng.sample::<f64, _>(StandardNormal);
        z[(i, 0)] = zi;
        w[(i, 0)] = wi;
        u.push(ui);
        a.push(ai);
        y.push(yi);
    }
    Ok(SimDraw { data: ProxyDataset::new(y, a, x, z, w)?, u, potential_outcomes: None })
}

/// Proxy transformations used to misspecify the working models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misspecification {
    None,
    /// `W* = |W|^{1/2} + 3`.
    WStar3,
    /// `Z* = |Z|^{1/2} + 3`.
    ZStar3,
    /// `W* = |W|^{1/2} + 1` and `Z* = |Z|^{1/2} + 1`.
    BothStar1,
}

impl Misspecification {
    pub fn transforms_w(self) -> bool {
        matches!(self, Misspecification::WStar3 | Misspecification::BothStar1)
    }
    pub fn transforms_z(self) -> bool {
        matches!(self, Misspecification::ZStar3 | Misspecification::BothStar1)
    }
    fn shift(self) -> f64 {
        if self == Misspecification::BothStar1 {
            1.0
        } else {
            3.0
        }
    }
}

/// `[|M|^{1/2} + shift, M]`: transformed columns first, originals after.
fn prepend_star(m: &DMatrix<f64>, shift: f64) -> DMatrix<f64> {
    let p = m.ncols();
    DMatrix::from_fn(m.nrows(), 2 * p, |i, j| if j < p { m[(i, j)].abs().sqrt() + shift } else { m[(i, j - p)] })
}

/// Copy of `data` whose transformed proxy blocks hold the transformed columns
/// followed by the originals. The misspecified bridge reads the first half;
/// the other bridge keeps its target or instrument functions of the
/// untransformed proxy.
pub fn misspecify(data: &ProxyDataset, which: Misspecification) -> Result<ProxyDataset> {
    let mut out = data.clone();
    if which.transforms_w() {
        out = out.with_w(prepend_star(data.w(), which.shift()))?;
    }
    if which.transforms_z() {
        out = out.with_z(prepend_star(data.z(), which.shift()))?;
    }
    Ok(out)
}

/// Mechanism in which `Z` affects `W` directly (violating the proxy
/// independence conditions). True ATE is 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationConfig {
    pub n: usize,
    pub seed: u64,
}

pub const VIOLATION_TRUE_ATE: f64 = 0.5;

/// Structural coefficients of the violation mechanism.
pub mod violation {
    pub const Z: (f64, f64, f64) = (0.5, 0.5, 1.0); // intercept, X, U
    pub const LOGIT_A: (f64, f64, f64, f64) = (-0.5, 1.0, 0.5, 0.3); // intercept, Z, X, U
    pub const W: (f64, f64, f64, f64) = (1.0, -1.0, 0.4, 1.5); // intercept, X, U, Z
    /// `Y(a) = 1 + 0.5a + 2X + U + 1.5aU + 2ε₂`.
    pub fn outcome(a: f64, x: f64, u: f64, eps2: f64) -> f64 {
        1.0 + 0.5 * a + 2.0 * x + u + 1.5 * a * u + 2.0 * eps2
    }
}

pub fn simulate_violation(config: &ViolationConfig) -> Result<SimDraw> {
    simulate_violation_replication(config, 0)
}

pub fn simulate_violation_replication(config: &ViolationConfig, rep: u64) -> Result<SimDraw> {
    if config.n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let mut rng = replication_rng(config.seed, rep);
    let n = config.n;
    let rho: f64 = 0.5;
    let mut x = DMatrix::zeros(n, 1);
    let mut z = DMatrix::zeros(n, 1);
    let mut w = DMatrix::zeros(n, 1);
    let (mut u, mut a, mut y, mut y0, mut y1) = (vec![], vec![], vec![], vec![], vec![]);
    for i in 0..n {
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let xi = e1;
        let ui = rho * e1 + (1.0 - rho * rho).sqrt() * e2;
        let zi = violation::Z.0 + violation::Z.1 * xi + violation::Z.2 * ui + rng.sample::<f64, _>(StandardNormal);
        let l = violation::LOGIT_A;
        let ai = u8::from(rng.random::<f64>() < expit(l.0 + l.1 * zi + l.2 * xi + l.3 * ui));
        let eps2: f64 = rng.sample(StandardNormal);
        let wc = violation::W;
        let wi = wc.0 + wc.1 * xi + wc.2 * ui + wc.3 * zi + eps2;
        let (o0, o1) = (violation::outcome(0.0, xi, ui, eps2), violation::outcome(1.0, xi, ui, eps2));
        x[(i, 0)] = xi;
        z[(i, 0)] = zi;
        w[(i, 0)] = wi;
        u.push(ui);
        a.push(ai);
        y.push(if ai == 1 { o1 } else { o0 });
        y0.push(o0);
        y1.push(o1);
    }
    Ok(SimDraw { data: ProxyDataset::new(y, a, x, z, w)?, u, potential_outcomes: Some((y0, y1)) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_implies_expected_bridge_slopes() {
        let cfg = SimConfig::main_design();
        cfg.validate().unwrap();
        let d = derive_params(&cfg, 0.25, &[0.25, 0.25]).unwrap();
        assert!((d.t_z + 0.5).abs() < 1e-12);
        assert!((d.t_a + 0.125).abs() < 1e-12);
        assert_eq!(d.psi_true, 2.0);
    }

    #[test]
    fn weak_proxy_config_keeps_bridge_slopes() {
        let cfg = SimConfig::weak_proxy();
        cfg.validate().unwrap();
        let d = derive_params(&cfg, 0.25, &[0.25, 0.25]).unwrap();
        assert!((d.t_z + 0.5).abs() < 1e-12 && (d.t_a + 0.125).abs() < 1e-12);
    }

    #[test]
    fn no_confounding_config_has_flat_bridge() {
        let cfg = SimConfig::no_confounding();
        cfg.validate().unwrap();
        let d = derive_params(&cfg, 0.25, &[0.25, 0.25]).unwrap();
        assert_eq!((d.t_z, d.t_a), (0.0, 0.0));
    }

    #[test]
    fn zero_z_u_covariance_is_rejected() {
        let mut cfg = SimConfig::main_design();
        cfg.sigma[0][2] = 0.0;
        cfg.sigma[2][0] = 0.0;
        assert!(derive_params(&cfg, 0.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn constraint_violations_are_rejected() {
        let mut cfg = SimConfig::main_design();
        cfg.mu_a = 0.2;
        assert!(cfg.validate().unwrap_err().to_string().contains("mu_a"));
        let mut cfg = SimConfig::main_design();
        cfg.sigma[0][1] = 0.3;
        cfg.sigma[1][0] = 0.3;
        assert!(cfg.validate().unwrap_err().to_string().contains("sigma_zw"));
    }

    #[test]
    fn consistent_propensity_coincides_with_logistic_for_default() {
        // Under the default design both propensity modes give the same law.
        let cfg = SimConfig::main_design();
        let logistic = SimConfig { propensity_mode: PropensityMode::Logistic, ..cfg.clone() };
        let d = derive_params(&cfg, cfg.t_0, &cfg.t_x).unwrap();
        for x in [[0.0, 0.0], [0.3, -0.2], [1.0, 2.0]] {
            assert!((propensity(&cfg, &d, &x) - propensity(&logistic, &d, &x)).abs() < 1e-14);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = SimConfig { n: 200, seed: 42, ..SimConfig::main_design() };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.u, b.u);
        let c = simulate_replication(&cfg, 1).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn noise_free_outcome_is_exactly_linear() {
        let cfg = SimConfig { n: 10_000, sigma_y: 0.0, omega: 4.0, ..SimConfig::main_design() };
        let draw = simulate(&cfg).unwrap();
        let d = &draw.data;
        let design = DMatrix::from_fn(d.n(), 5, |i, j| match j {
            0 => 1.0,
            1 => f64::from(d.a()[i]),
            2 | 3 => d.x()[(i, j - 2)],
            _ => d.w()[(i, 0)],
        });
        let b = crate::linalg::ols(&design, &nalgebra::DVector::from_column_slice(d.y())).unwrap();
        for (got, want) in b.iter().zip([2.0, 2.0, 0.25, 0.25, 4.0]) {
            assert!((got - want).abs() < 1e-8, "{b}");
        }
    }

    #[test]
    fn misspecification_transforms() {
        let d = ProxyDataset::new(
            vec![0.0, 1.0],
            vec![0, 1],
            DMatrix::zeros(2, 0),
            DMatrix::from_vec(2, 1, vec![-9.0, 0.0]),
            DMatrix::from_vec(2, 1, vec![4.0, 0.0]),
        )
        .unwrap();
        let w = misspecify(&d, Misspecification::WStar3).unwrap();
        assert_eq!((w.w()[(0, 0)], w.w()[(0, 1)]), (5.0, 4.0));
        assert_eq!(w.z(), d.z());
        let z = misspecify(&d, Misspecification::ZStar3).unwrap();
        assert_eq!((z.z()[(0, 0)], z.z()[(0, 1)]), (6.0, -9.0));
        assert_eq!(z.w(), d.w());
        assert_eq!(z.y(), d.y());
        let both = misspecify(&d, Misspecification::BothStar1).unwrap();
        assert_eq!((both.w()[(1, 0)], both.z()[(1, 0)]), (1.0, 1.0));
        assert_eq!((both.p_w(), both.p_z()), (2, 2));
        assert_eq!(misspecify(&d, Misspecification::None).unwrap(), d);
    }

    #[test]
    fn violation_outcome_difference_at_zero_noise() {
        assert_eq!(violation::outcome(1.0, 0.0, 0.0, 0.0) - violation::outcome(0.0, 0.0, 0.0, 0.0), 0.5);
    }

    #[test]
    fn invalid_dimensions_are_rejected() {
        let cfg = SimConfig { b_x: vec![0.25], ..SimConfig::main_design() };
        assert!(cfg.validate().is_err());
        let json = serde_json::to_string(&SimConfig::main_design()).unwrap();
        assert_eq!(SimConfig::from_json(&json).unwrap(), SimConfig::main_design());
        assert!(SimConfig::from_json(&json.replace("\"omega\"", "\"omegaa\"")).is_err());
    }
}
