//! Proxy-relevance checks on observed data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bridge::{BridgeTarget, OutcomeMoments, TreatmentMoments};
use crate::data::ProxyDataset;
use crate::error::{Error, Result};
use crate::layout::TermLayout;
use crate::linalg::{condition_number, ols, CONDITION_CEILING};
use crate::newton::RootProblem;

/// Partial correlation of one `(Z_j, W_k)` pair given `(1, X, A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub z: String,
    pub w: String,
    pub r: Option<f64>,
    pub p_value: Option<f64>,
    /// Why the pair was skipped, if it was.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialCorrelations {
    pub df: usize,
    /// Row-major `p_z × p_w`.
    pub pairs: Vec<PairCorrelation>,
    pub p_z: usize,
    pub p_w: usize,
}

impl PartialCorrelations {
    pub fn get(&self, j: usize, k: usize) -> &PairCorrelation {
        &self.pairs[j * self.p_w + k]
    }
}

fn residuals(design: &DMatrix<f64>, v: DVector<f64>) -> Result<DVector<f64>> {
    let beta = ols(design, &v)?;
    Ok(v - design * beta)
}

/// Two-sided p-value of the t-test for zero correlation.
pub fn correlation_p_value(r: f64, df: usize) -> f64 {
    let r = r.clamp(-1.0, 1.0);
    if (1.0 - r.abs()) <= f64::EPSILON {
        return 0.0;
    }
    let t = r * (df as f64 / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive df");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Pearson correlation; `None` when either vector has no variation.
fn pearson(a: &DVector<f64>, b: &DVector<f64>) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    let scale = (saa * sbb).sqrt();
    (scale > 1e-12 * n).then(|| (sab / scale).clamp(-1.0, 1.0))
}

/// Residualizes every `Z_j` and `W_k` on `(1, X, A)` and tests each residual
/// pair for correlation with `n − p_x − 4` degrees of freedom.
pub fn partial_correlation_diagnostic(data: &ProxyDataset) -> Result<PartialCorrelations> {
    let (n, p_x) = (data.n(), data.p_x());
    if n <= p_x + 4 {
        return Err(Error::Dimension(format!("{n} observations; need more than {}", p_x + 4)));
    }
    let df = n - p_x - 4;
    let design = DMatrix::from_fn(n, p_x + 2, |i, j| match j {
        0 => 1.0,
        j if j <= p_x => data.x()[(i, j - 1)],
        _ => f64::from(data.a()[i]),
    });
    let names = data.names();
    let (p_z, p_w) = (data.p_z(), data.p_w());
    let condition = condition_number(&design);
    let rank_ok = condition <= CONDITION_CEILING;
    let resid = |m: &DMatrix<f64>, j: usize| residuals(&design, m.column(j).into_owned()).ok();
    let rz: Vec<_> = (0..p_z).map(|j| if rank_ok { resid(data.z(), j) } else { None }).collect();
    let rw: Vec<_> = (0..p_w).map(|k| if rank_ok { resid(data.w(), k) } else { None }).collect();

    let mut pairs = Vec::with_capacity(p_z * p_w);
    for j in 0..p_z {
        for k in 0..p_w {
            let mut pair = PairCorrelation {
                z: names.z[j].clone(),
                w: names.w[k].clone(),
                r: None,
                p_value: None,
                skipped: None,
            };
            match (&rz[j], &rw[k]) {
                (Some(a), Some(b)) => match pearson(a, b) {
                    Some(r) => {
                        pair.r = Some(r);
                        pair.p_value = Some(correlation_p_value(r, df));
                    }
                    None => pair.skipped = Some("residual has no variation given (1, X, A)".into()),
                },
                _ => {
                    pair.skipped = Some(format!("(1, X, A) regression is rank deficient (condition {condition:.3e})"))
                }
            }
            pairs.push(pair);
        }
    }
    Ok(PartialCorrelations { df, pairs, p_z, p_w })
}

/// Conditioning of the default bridge systems, evaluated before any fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentConditioning {
    /// `P_n[u vᵀ]` of the outcome bridge.
    pub outcome_gram: f64,
    /// Treatment-bridge Jacobian at `t = 0`.
    pub treatment_jacobian: f64,
}

pub fn moment_conditioning(data: &ProxyDataset) -> Result<MomentConditioning> {
    let h = TermLayout::outcome_bridge(data);
    let u = TermLayout::instrument(data);
    let (g, _) = OutcomeMoments::new(data, &h, &u, BridgeTarget::Ate)?.system();
    let q = TermLayout::treatment_bridge(data);
    let tm = TreatmentMoments::new(data, &q, &h, BridgeTarget::Ate)?;
    let j = tm.jacobian(&DVector::zeros(tm.dim()));
    Ok(MomentConditioning { outcome_gram: condition_number(&g), treatment_jacobian: condition_number(&j) })
}
