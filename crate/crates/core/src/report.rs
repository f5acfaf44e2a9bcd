use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Two-sided 95% normal critical value.
pub const Z_975: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorTag {
    #[serde(rename = "POR")]
    Por,
    #[serde(rename = "PIPW")]
    Pipw,
    #[serde(rename = "PDR")]
    Pdr,
    #[serde(rename = "DR")]
    Dr,
    #[serde(rename = "ATT_OR")]
    AttOr,
    #[serde(rename = "ATT_IPW")]
    AttIpw,
    #[serde(rename = "ATT_DR")]
    AttDr,
}

impl EstimatorTag {
    pub const ATE: [EstimatorTag; 4] = [Self::Dr, Self::Por, Self::Pipw, Self::Pdr];
    pub const ATT: [EstimatorTag; 3] = [Self::AttOr, Self::AttIpw, Self::AttDr];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Por => "POR",
            Self::Pipw => "PIPW",
            Self::Pdr => "PDR",
            Self::Dr => "DR",
            Self::AttOr => "ATT_OR",
            Self::AttIpw => "ATT_IPW",
            Self::AttDr => "ATT_DR",
        }
    }
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        let all = Self::ATE.iter().chain(Self::ATT.iter());
        all.copied()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator `{s}`")))
    }
}

/// Solver bookkeeping for one nuisance fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub component: String,
    pub iterations: usize,
    pub residual_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimatorTag,
    pub estimate: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub solver_meta: Vec<FitMeta>,
}

impl EstimateReport {
    pub fn new(estimator: EstimatorTag, estimate: f64, std_err: f64, n: usize, solver_meta: Vec<FitMeta>) -> Self {
        let (ci_low, ci_high) = wald_interval(estimate, std_err);
        Self { estimator, estimate, std_err, ci_low, ci_high, n, solver_meta }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }

    pub fn ci_length(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<8} {:>10.4} ({:.4})  95% CI ({:.4}, {:.4})  n={}",
            self.estimator.as_str(),
            self.estimate,
            self.std_err,
            self.ci_low,
            self.ci_high,
            self.n
        )
    }
}

/// `estimate ∓ 1.959964·se`.
pub fn wald_interval(estimate: f64, se: f64) -> (f64, f64) {
    debug_assert!(se >= 0.0 || se.is_nan());
    (estimate - Z_975 * se, estimate + Z_975 * se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wald_examples() {
        assert_eq!(wald_interval(0.0, 1.0), (-1.959964, 1.959964));
        assert_eq!(wald_interval(2.0, 0.0), (2.0, 2.0));
        let (lo, hi) = wald_interval(-1.66, 0.43);
        assert!((lo - -2.50).abs() < 0.01 && (hi - -0.82).abs() < 0.01, "{lo} {hi}");
    }

    #[test]
    fn tags_round_trip_through_json_and_text() {
        for tag in EstimatorTag::ATE.iter().chain(EstimatorTag::ATT.iter()) {
            let json = serde_json::to_string(tag).unwrap();
            assert_eq!(json, format!("\"{}\"", tag.as_str()));
            assert_eq!(tag.as_str().parse::<EstimatorTag>().unwrap(), *tag);
        }
    }

    #[test]
    fn report_json_keys_are_stable() {
        let r = EstimateReport::new(EstimatorTag::Pdr, 1.0, 0.1, 10, vec![]);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["ci_high", "ci_low", "estimate", "estimator", "n", "solver_meta", "std_err"]);
    }

    proptest! {
        #[test]
        fn interval_reconstructs(est in -1e3f64..1e3, se in 0.0f64..1e2) {
            let r = EstimateReport::new(EstimatorTag::Por, est, se, 1, vec![]);
            prop_assert!(r.ci_low <= r.estimate && r.estimate <= r.ci_high);
            let (lo, hi) = wald_interval(r.estimate, r.std_err);
            prop_assert!((lo - r.ci_low).abs() <= 1e-12 && (hi - r.ci_high).abs() <= 1e-12);
        }
    }
}
