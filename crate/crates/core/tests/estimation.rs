use nalgebra::{DMatrix, DVector};

use proxci::bridge::{fit_att_outcome_bridge, fit_att_treatment_bridge};
use proxci::estimators::{att_estimators, por, proximal_ate, proximal_points, ProximalLayouts};
use proxci::layout::TermLayout;
use proxci::linalg::ols;
use proxci::sim::{simulate, simulate_violation, SimConfig, ViolationConfig, VIOLATION_TRUE_ATE};

fn large_default(seed: u64) -> proxci::sim::SimDraw {
    simulate(&SimConfig { n: 1_000_000, seed, ..SimConfig::main_design() }).unwrap()
}

#[test]
fn latent_outcome_regression_matches_gaussian_formulas() {
    let cfg = SimConfig::main_design();
    let draw = large_default(31);
    let d = &draw.data;
    let design = DMatrix::from_fn(d.n(), 5, |i, j| match j {
        0 => 1.0,
        1 => draw.u[i],
        2 => f64::from(d.a()[i]),
        j => d.x()[(i, j - 3)],
    });
    let beta = ols(&design, &DVector::from_column_slice(d.y())).unwrap();
    // E[Y|U,A,X] = b₀ + b_a A + b_x X + b_w E[W|U,X]
    // with E[W|U,X] = μ₀ + μ_x X + (σ_wu/σ_u²)(U − κ₀ − κ_x X)
    let ratio = cfg.sigma[1][2] / cfg.sigma[2][2];
    let intercept = cfg.b_0 + cfg.b_w * (cfg.mu_0 - ratio * cfg.kappa_0);
    let slope_u = cfg.b_w * ratio;
    let slope_x = cfg.b_x[0] + cfg.b_w * (cfg.mu_x[0] - ratio * cfg.kappa_x[0]);
    let expected = [intercept, slope_u, cfg.b_a, slope_x, slope_x];
    for (est, tru) in beta.iter().zip(expected) {
        assert!((est - tru).abs() <= 0.01, "{est} vs {tru}");
    }
}

#[test]
fn outcome_regression_recovers_effect_at_large_n() {
    let draw = large_default(32);
    let d = &draw.data;
    let layouts = ProximalLayouts::ate_default(d);
    let h = proxci::bridge::fit_outcome_bridge(d, &layouts.h, &layouts.instrument).unwrap();
    let report = por(d, &h).unwrap();
    assert!((report.estimate - 2.0).abs() <= 0.01, "{report:?}");
    assert!(report.std_err > 0.0 && report.std_err < 0.01);
}

#[test]
fn violation_mechanism_potential_outcome_oracle() {
    let draw = simulate_violation(&ViolationConfig { n: 1_000_000, seed: 33 }).unwrap();
    let (y0, y1) = draw.potential_outcomes.expect("violation draws carry potential outcomes");
    let ate = y1.iter().zip(&y0).map(|(a, b)| a - b).sum::<f64>() / y1.len() as f64;
    assert!((ate - VIOLATION_TRUE_ATE).abs() <= 0.01, "{ate}");
}

#[test]
fn violated_proxy_conditions_bias_the_doubly_robust_estimate() {
    let d = simulate_violation(&ViolationConfig { n: 200_000, seed: 34 }).unwrap().data;
    let fits = proximal_ate(&d, &ProximalLayouts::ate_default(&d)).unwrap();
    let bias = (fits.pdr.estimate - VIOLATION_TRUE_ATE).abs();
    assert!(bias >= 0.1, "bias {bias}");
}

#[test]
fn att_estimators_agree_with_constant_effect() {
    let draw = large_default(35);
    let d = &draw.data;
    let h = fit_att_outcome_bridge(d, &TermLayout::att_outcome_bridge(d), &TermLayout::att_treatment_bridge(d)).unwrap();
    let q =
        fit_att_treatment_bridge(d, &TermLayout::att_treatment_bridge(d), &TermLayout::att_outcome_bridge(d)).unwrap();
    for report in att_estimators(d, &h, &q).unwrap() {
        assert!((report.estimate - 2.0).abs() <= 0.02, "{report:?}");
        assert!(report.std_err > 0.0 && report.std_err < 0.05);
    }
}

#[test]
fn doubly_robust_estimate_is_orthogonal_to_nuisance_perturbations() {
    let draw = large_default(36);
    let d = &draw.data;
    let fits = proximal_ate(d, &ProximalLayouts::ate_default(d)).unwrap();
    let delta = 1e-4;
    let k_b = fits.h.b.len();
    let mut max_dr = 0.0_f64;
    let mut max_ipw = 0.0_f64;
    for j in 0..k_b + fits.q.t.len() {
        let shifted = |sign: f64| {
            let (mut h, mut q) = (fits.h.clone(), fits.q.clone());
            if j < k_b {
                h.b[j] += sign * delta;
            } else {
                q.t[j - k_b] += sign * delta;
            }
            proximal_points(d, &h, &q).unwrap()
        };
        let (up, down) = (shifted(1.0), shifted(-1.0));
        max_ipw = max_ipw.max(((up[1] - down[1]) / (2.0 * delta)).abs());
        max_dr = max_dr.max(((up[2] - down[2]) / (2.0 * delta)).abs());
    }
    // PIPW moves at first order with t; PDR only through sampling noise
    assert!(max_ipw > 0.5, "{max_ipw}");
    assert!(max_dr < 0.05, "{max_dr}");
}
