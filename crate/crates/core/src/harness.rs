//! Replicated simulation studies and their summary tables.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::{fit_outcome_bridge, fit_treatment_bridge};
use crate::data::ProxyDataset;
use crate::error::{Error, Result};
use crate::estimators::{pdr, pipw, por, standard_dr, ProximalLayouts};
use crate::layout::{Term, TermLayout};
use crate::report::{EstimateReport, EstimatorTag};
use crate::sim::{
    derive_params, misspecify, simulate_replication, simulate_violation_replication, Misspecification, PropensityMode,
    SimConfig, ViolationConfig, VIOLATION_TRUE_ATE,
};

/// Largest tolerated fraction of failed replications per estimator.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Data-generating mechanism behind a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DesignFamily {
    /// Main design (`S*`).
    Main,
    /// `U` does not affect treatment (`I1_*`).
    NoConfounding,
    /// `Z` affects `W` directly (`I2_*`).
    Violation,
    /// Weaker `Z`–`W` association (`I3_*`).
    WeakProxy,
}

impl DesignFamily {
    fn prefix(self) -> &'static str {
        match self {
            Self::Main => "",
            Self::NoConfounding => "I1_",
            Self::Violation => "I2_",
            Self::WeakProxy => "I3_",
        }
    }
}

/// A design family paired with the proxy transformation used for fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Scenario {
    pub family: DesignFamily,
    pub misspecification: Misspecification,
}

impl Scenario {
    pub fn new(family: DesignFamily, number: u8) -> Result<Self> {
        let misspecification = match number {
            1 => Misspecification::None,
            2 => Misspecification::WStar3,
            3 => Misspecification::ZStar3,
            4 => Misspecification::BothStar1,
            _ => return Err(Error::InvalidConfig(format!("scenario number {number} is not in 1..=4"))),
        };
        Ok(Self { family, misspecification })
    }

    pub fn main(number: u8) -> Self {
        Self::new(DesignFamily::Main, number).expect("scenario number in 1..=4")
    }

    pub fn number(&self) -> u8 {
        match self.misspecification {
            Misspecification::None => 1,
            Misspecification::WStar3 => 2,
            Misspecification::ZStar3 => 3,
            Misspecification::BothStar1 => 4,
        }
    }

    /// All four scenarios of a family.
    pub fn family(family: DesignFamily) -> [Scenario; 4] {
        [1, 2, 3, 4].map(|k| Self::new(family, k).expect("valid number"))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}S{}", self.family.prefix(), self.number())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let (family, rest) = match upper.split_once('_') {
            None => (DesignFamily::Main, upper.as_str()),
            Some(("I1", r)) => (DesignFamily::NoConfounding, r),
            Some(("I2", r)) => (DesignFamily::Violation, r),
            Some(("I3", r)) => (DesignFamily::WeakProxy, r),
            Some(_) => return Err(Error::InvalidConfig(format!("unknown scenario `{s}`"))),
        };
        let number = rest
            .strip_prefix('S')
            .and_then(|d| d.parse::<u8>().ok())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario `{s}`")))?;
        Self::new(family, number)
    }
}

impl TryFrom<String> for Scenario {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> Self {
        s.to_string()
    }
}

fn default_estimators() -> Vec<EstimatorTag> {
    EstimatorTag::ATE.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub scenario: Scenario,
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorTag>,
    /// Worker threads; `None` uses all available cores.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Overrides the treatment mechanism of the Gaussian designs.
    #[serde(default)]
    pub propensity_mode: Option<PropensityMode>,
}

impl StudySpec {
    pub fn new(scenario: Scenario, reps: usize, n: usize, seed: u64) -> Self {
        Self { scenario, reps, n, seed, estimators: default_estimators(), workers: None, propensity_mode: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.n < 10 {
            return Err(Error::InvalidConfig(format!("n = {} is too small for a study", self.n)));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators selected".into()));
        }
        if let Some(t) = self.estimators.iter().find(|t| !EstimatorTag::ATE.contains(t)) {
            return Err(Error::InvalidConfig(format!("{t} is not an ATE estimator")));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Simulation configuration of the Gaussian designs.
    pub fn sim_config(&self) -> Option<SimConfig> {
        let base = match self.scenario.family {
            DesignFamily::Main => SimConfig::main_design(),
            DesignFamily::NoConfounding => SimConfig::no_confounding(),
            DesignFamily::WeakProxy => SimConfig::weak_proxy(),
            DesignFamily::Violation => return None,
        };
        Some(SimConfig {
            n: self.n,
            seed: self.seed,
            propensity_mode: self.propensity_mode.unwrap_or(base.propensity_mode),
            ..base
        })
    }

    /// Target of the study.
    pub fn psi_true(&self) -> Result<f64> {
        match self.sim_config() {
            Some(cfg) => Ok(derive_params(&cfg, cfg.t_0, &cfg.t_x)?.psi_true),
            None => Ok(VIOLATION_TRUE_ATE),
        }
    }

    /// Transformed dataset of replication `rep`.
    pub fn replication_data(&self, rep: u64) -> Result<ProxyDataset> {
        let draw = match self.sim_config() {
            Some(cfg) => simulate_replication(&cfg, rep)?,
            None => simulate_violation_replication(&ViolationConfig { n: self.n, seed: self.seed }, rep)?,
        };
        misspecify(&draw.data, self.scenario.misspecification)
    }

    /// Covariates of the baseline AIPW estimator: `X` alone when there is no
    /// unmeasured confounding, otherwise `(X, Z, W)` after transformation.
    pub fn baseline_covariates(&self, data: &ProxyDataset) -> Vec<Term> {
        let which = self.scenario.misspecification;
        let mut out: Vec<Term> = (0..data.p_x()).map(Term::X).collect();
        if self.scenario.family != DesignFamily::NoConfounding {
            out.extend(proxy_columns(data.p_z(), which.transforms_z()).0.map(Term::Z));
            out.extend(proxy_columns(data.p_w(), which.transforms_w()).0.map(Term::W));
        }
        out
    }
}

/// `(model, original)` column ranges of a proxy block after [`misspecify`].
fn proxy_columns(p: usize, transformed: bool) -> (Range<usize>, Range<usize>) {
    if transformed {
        (0..p / 2, p / 2..p)
    } else {
        (0..p, 0..p)
    }
}

/// Working-model layouts on [`misspecify`]d data. When one proxy is
/// transformed only its bridge model sees it; instruments and targets keep
/// the original columns. When both are transformed, every proxy function
/// uses the transformed columns.
pub fn scenario_layouts(data: &ProxyDataset, which: Misspecification) -> ProximalLayouts {
    let (z_model, z_orig) = proxy_columns(data.p_z(), which.transforms_z());
    let (w_model, w_orig) = proxy_columns(data.p_w(), which.transforms_w());
    let both = which.transforms_z() && which.transforms_w();
    let (z_inst, w_target) = if both { (z_model.clone(), w_model.clone()) } else { (z_orig, w_orig) };
    let p_x = data.p_x();
    ProximalLayouts {
        h: TermLayout::from_parts(w_model.map(Term::W), true, p_x),
        instrument: TermLayout::from_parts(z_inst.map(Term::Z), true, p_x),
        q: TermLayout::from_parts(z_model.map(Term::Z), true, p_x),
        target: TermLayout::from_parts(w_target.map(Term::W), true, p_x),
    }
}

/// Per-replication outcome of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl From<&EstimateReport> for RepEstimate {
    fn from(r: &EstimateReport) -> Self {
        Self { estimate: r.estimate, std_err: r.std_err, ci_low: r.ci_low, ci_high: r.ci_high }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: u64,
    /// Aligned with the study's estimator list.
    pub results: Vec<std::result::Result<RepEstimate, String>>,
    /// Re-evaluated moment residuals `‖r‖_∞` of the bridge fits that converged.
    pub bridge_residuals: Vec<f64>,
    /// Treatment-bridge fits without an exact root (least-squares solutions).
    #[serde(default)]
    pub least_squares_bridges: usize,
}

/// Runs every selected estimator on replication `rep`.
pub fn run_replication(spec: &StudySpec, rep: u64) -> RepRecord {
    let data = match spec.replication_data(rep) {
        Ok(d) => d,
        Err(e) => {
            let msg = format!("replication {rep}: data generation: {e}");
            return RepRecord {
                rep,
                results: vec![Err(msg); spec.estimators.len()],
                bridge_residuals: vec![],
                least_squares_bridges: 0,
            };
        }
    };
    let layouts = scenario_layouts(&data, spec.scenario.misspecification);
    let needs_h = spec.estimators.iter().any(|t| matches!(t, EstimatorTag::Por | EstimatorTag::Pdr));
    let needs_q = spec.estimators.iter().any(|t| matches!(t, EstimatorTag::Pipw | EstimatorTag::Pdr));
    let h = needs_h.then(|| fit_outcome_bridge(&data, &layouts.h, &layouts.instrument));
    let q = needs_q.then(|| fit_treatment_bridge(&data, &layouts.q, &layouts.target));
    let mut bridge_residuals = vec![];
    if let Some(Ok(h)) = &h {
        bridge_residuals.push(h.residual_moment_norm);
    }
    let mut least_squares_bridges = 0;
    match &q {
        Some(Ok(q)) if q.converged => bridge_residuals.push(q.final_residual_norm),
        Some(Ok(_)) => least_squares_bridges += 1,
        _ => {}
    }
    let fail = |what: &str, e: &Error| format!("replication {rep}: {what}: {e}");
    let results = spec
        .estimators
        .iter()
        .map(|&tag| {
            let report = match tag {
                EstimatorTag::Dr => standard_dr(&data, &spec.baseline_covariates(&data)),
                EstimatorTag::Por => match h.as_ref().expect("fitted") {
                    Ok(h) => por(&data, h),
                    Err(e) => return Err(fail("outcome bridge", e)),
                },
                EstimatorTag::Pipw => match q.as_ref().expect("fitted") {
                    Ok(q) => pipw(&data, q),
                    Err(e) => return Err(fail("treatment bridge", e)),
                },
                EstimatorTag::Pdr => match (h.as_ref().expect("fitted"), q.as_ref().expect("fitted")) {
                    (Ok(h), Ok(q)) => pdr(&data, h, q),
                    (Err(e), _) => return Err(fail("outcome bridge", e)),
                    (_, Err(e)) => return Err(fail("treatment bridge", e)),
                },
                other => unreachable!("{other} rejected by validation"),
            };
            report.map(|r| RepEstimate::from(&r)).map_err(|e| fail(tag.as_str(), &e))
        })
        .collect();
    RepRecord { rep, results, bridge_residuals, least_squares_bridges }
}

/// Aggregate metrics of one estimator over its successful replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorTag,
    /// `|mean(estimate) − ψ|`.
    pub bias: f64,
    /// `mean(estimate) − ψ`.
    pub mean_error: f64,
    pub mse: f64,
    pub coverage: f64,
    pub mean_ci_length: f64,
    /// Monte Carlo standard error of the bias, `SD/√reps`.
    pub bias_se: f64,
    pub mean_std_err: f64,
    pub successes: usize,
    pub failures: usize,
}

impl EstimatorSummary {
    /// Aggregates estimates against the truth `psi`; `None` when nothing succeeded.
    pub fn from_estimates(estimator: EstimatorTag, psi: f64, estimates: &[RepEstimate], failures: usize) -> Option<Self> {
        let m = estimates.len();
        if m == 0 {
            return None;
        }
        let mf = m as f64;
        let mean = estimates.iter().map(|e| e.estimate).sum::<f64>() / mf;
        let mse = estimates.iter().map(|e| (e.estimate - psi).powi(2)).sum::<f64>() / mf;
        let var = if m > 1 {
            estimates.iter().map(|e| (e.estimate - mean).powi(2)).sum::<f64>() / (mf - 1.0)
        } else {
            0.0
        };
        let covered = estimates.iter().filter(|e| e.ci_low <= psi && psi <= e.ci_high).count();
        Some(Self {
            estimator,
            bias: (mean - psi).abs(),
            mean_error: mean - psi,
            mse,
            coverage: covered as f64 / mf,
            mean_ci_length: estimates.iter().map(|e| e.ci_high - e.ci_low).sum::<f64>() / mf,
            bias_se: (var / mf).sqrt(),
            mean_std_err: estimates.iter().map(|e| e.std_err).sum::<f64>() / mf,
            successes: m,
            failures,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub spec: StudySpec,
    pub psi_true: f64,
    pub summaries: Vec<EstimatorSummary>,
    pub records: Vec<RepRecord>,
}

impl StudyResult {
    pub fn summary(&self, tag: EstimatorTag) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == tag)
    }

    /// Replications whose treatment bridge had no exact root.
    pub fn least_squares_bridges(&self) -> usize {
        self.records.iter().map(|r| r.least_squares_bridges).sum()
    }

    /// Largest bridge moment residual over all replications.
    pub fn max_bridge_residual(&self) -> f64 {
        self.records.iter().flat_map(|r| r.bridge_residuals.iter().copied()).fold(0.0, f64::max)
    }
}

/// Runs `spec.reps` independent replications, each on its own random stream,
/// so results do not depend on the number of workers.
pub fn run_study(spec: &StudySpec) -> Result<StudyResult> {
    spec.validate()?;
    let psi = spec.psi_true()?;
    let run = || (0..spec.reps as u64).into_par_iter().map(|rep| run_replication(spec, rep)).collect::<Vec<_>>();
    let records = match spec.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    aggregate(spec.clone(), psi, records)
}

/// Deterministic reduction of replication records.
pub fn aggregate(spec: StudySpec, psi: f64, records: Vec<RepRecord>) -> Result<StudyResult> {
    let mut summaries = Vec::with_capacity(spec.estimators.len());
    for (k, &tag) in spec.estimators.iter().enumerate() {
        let mut ok = Vec::with_capacity(records.len());
        let mut errors = Vec::new();
        for r in &records {
            match &r.results[k] {
                Ok(e) => ok.push(e.clone()),
                Err(msg) => errors.push(msg),
            }
        }
        if errors.len() as f64 > MAX_FAILURE_RATE * records.len() as f64 {
            return Err(Error::StudyAborted {
                failed: errors.len(),
                reps: records.len(),
                first: errors[0].clone(),
            });
        }
        if let Some(s) = EstimatorSummary::from_estimates(tag, psi, &ok, errors.len()) {
            summaries.push(s);
        }
    }
    Ok(StudyResult { spec, psi_true: psi, summaries, records })
}

// ---------------------------------------------------------------------------
// Tables

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            _ => Err(Error::InvalidConfig(format!("unknown table format `{s}`"))),
        }
    }
}

/// A named column extractor of [`EstimatorSummary`].
type Metric = fn(&EstimatorSummary) -> f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Absolute bias and MSE, both ×10⁻².
    BiasMse,
    /// Coverage in percent and mean CI length ×10⁻².
    CoverageLength,
}

impl TableKind {
    fn metrics(self) -> [(&'static str, Metric); 2] {
        match self {
            Self::BiasMse => [("Bias", |s| s.bias), ("MSE", |s| s.mse)],
            Self::CoverageLength => [("Coverage", |s| s.coverage), ("Length", |s| s.mean_ci_length)],
        }
    }
}

/// Every reported metric is scaled by 100 and rounded to one decimal.
fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{:.1}", v * 100.0))
}

pub fn emit_table(results: &[StudyResult], kind: TableKind, format: TableFormat) -> String {
    let tags: Vec<EstimatorTag> = results.first().map(|r| r.spec.estimators.clone()).unwrap_or_default();
    let mut header = vec!["scenario".to_string(), "metric".to_string()];
    header.extend(tags.iter().map(|t| t.as_str().to_string()));
    let mut rows = vec![];
    for r in results {
        for (name, metric) in kind.metrics() {
            let mut row = vec![r.spec.scenario.to_string(), name.to_string()];
            row.extend(tags.iter().map(|&t| cell(r.summary(t).map(metric))));
            rows.push(row);
        }
    }
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            for line in std::iter::once(&header).chain(&rows) {
                out.push_str(&line.join(","));
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            out.push_str(&format!("| {} |\n", header.join(" | ")));
            out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
            for row in &rows {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
        }
    }
    out
}

/// Bias/MSE table followed by the coverage/length table.
pub fn emit_tables(results: &[StudyResult], format: TableFormat) -> String {
    let sep = if format == TableFormat::Markdown { "\n" } else { "" };
    format!(
        "{}{sep}{}",
        emit_table(results, TableKind::BiasMse, format),
        emit_table(results, TableKind::CoverageLength, format)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(estimate: f64, half: f64) -> RepEstimate {
        RepEstimate { estimate, std_err: half / 1.959964, ci_low: estimate - half, ci_high: estimate + half }
    }

    #[test]
    fn scenario_names_round_trip() {
        for name in ["S1", "S4", "I1_S1", "I2_S3", "I3_S4"] {
            let s: Scenario = name.parse().unwrap();
            assert_eq!(s.to_string(), name);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<Scenario>(&json).unwrap(), s);
        }
        assert_eq!("i1_s2".parse::<Scenario>().unwrap().misspecification, Misspecification::WStar3);
        for bad in ["S0", "S5", "I4_S1", "X", "I1_T1"] {
            assert!(bad.parse::<Scenario>().is_err(), "{bad}");
        }
    }

    #[test]
    fn single_replication_aggregation_is_degenerate() {
        let s = EstimatorSummary::from_estimates(EstimatorTag::Pdr, 2.0, &[rep(2.3, 0.1)], 0).unwrap();
        assert!((s.mean_error - 0.3).abs() < 1e-12 && (s.bias - 0.3).abs() < 1e-12);
        assert!((s.mse - 0.09).abs() < 1e-12);
        assert_eq!(s.coverage, 0.0);
        let s = EstimatorSummary::from_estimates(EstimatorTag::Pdr, 2.0, &[rep(2.05, 0.1)], 0).unwrap();
        assert_eq!(s.coverage, 1.0);
        assert_eq!(s.bias_se, 0.0);
    }

    #[test]
    fn metrics_by_hand() {
        let reps = [rep(1.0, 0.5), rep(3.0, 0.5), rep(2.5, 1.0)];
        let s = EstimatorSummary::from_estimates(EstimatorTag::Por, 2.0, &reps, 1).unwrap();
        // mean 6.5/3, errors (−1, 1, 0.5)
        assert!((s.mean_error - 0.5 / 3.0).abs() < 1e-12);
        assert!((s.mse - 2.25 / 3.0).abs() < 1e-12);
        assert!((s.coverage - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.mean_ci_length - 4.0 / 3.0).abs() < 1e-12);
        assert!(s.mse >= s.bias * s.bias - 1e-12);
        assert_eq!((s.successes, s.failures), (3, 1));
    }

    #[test]
    fn zero_reps_is_rejected() {
        let spec = StudySpec::new(Scenario::main(1), 0, 2000, 1);
        assert!(run_study(&spec).is_err());
        let mut spec = StudySpec::new(Scenario::main(1), 1, 2000, 1);
        spec.estimators = vec![EstimatorTag::AttDr];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn failure_rate_aborts() {
        let spec = StudySpec::new(Scenario::main(1), 10, 100, 1);
        let ok = |rep| RepRecord { rep, results: vec![Ok(super::tests::rep(2.0, 0.1)); 4], bridge_residuals: vec![], least_squares_bridges: 0 };
        let mut records: Vec<_> = (0..10).map(ok).collect();
        records[3].results[2] = Err("boom".into());
        assert!(matches!(aggregate(spec.clone(), 2.0, records.clone()), Err(Error::StudyAborted { failed: 1, .. })));
        let spec20 = StudySpec { reps: 20, ..spec };
        let mut records20: Vec<_> = (0..20).map(ok).collect();
        records20[3] = records[3].clone();
        let result = aggregate(spec20, 2.0, records20).unwrap();
        assert_eq!(result.summary(EstimatorTag::Pipw).unwrap().failures, 1);
        assert_eq!(result.summary(EstimatorTag::Pipw).unwrap().successes, 19);
    }

    fn synthetic(scenario: &str) -> StudyResult {
        let spec = StudySpec::new(scenario.parse().unwrap(), 2, 100, 1);
        let records = (0..2)
            .map(|r| RepRecord {
                rep: r,
                results: (0..4).map(|k| Ok(rep(2.0 + 0.01 * (k as f64 + r as f64), 0.2))).collect(),
                bridge_residuals: vec![1e-14],
                least_squares_bridges: 0,
            })
            .collect();
        aggregate(spec, 2.0, records).unwrap()
    }

    #[test]
    fn tables_have_expected_shape_and_agree_across_formats() {
        let results: Vec<_> = ["S1", "S2", "S3", "S4"].iter().map(|s| synthetic(s)).collect();
        let csv = emit_table(&results, TableKind::BiasMse, TableFormat::Csv);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 8);
        assert_eq!(lines[0], "scenario,metric,DR,POR,PIPW,PDR");
        assert_eq!(lines[1], "S1,Bias,0.5,1.5,2.5,3.5");
        let md = emit_table(&results, TableKind::BiasMse, TableFormat::Markdown);
        let md_cells: Vec<Vec<String>> = md
            .lines()
            .skip(2)
            .map(|l| l.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect())
            .collect();
        let csv_cells: Vec<Vec<String>> = lines[1..].iter().map(|l| l.split(',').map(String::from).collect()).collect();
        assert_eq!(md_cells, csv_cells);
        let cov = emit_table(&results, TableKind::CoverageLength, TableFormat::Csv);
        assert!(cov.lines().nth(1).unwrap().starts_with("S1,Coverage,100.0"));
        assert!(cov.lines().nth(2).unwrap().starts_with("S1,Length,40.0"));
    }

    #[test]
    fn study_result_round_trips_through_json() {
        let r = synthetic("I3_S2");
        let back: StudyResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let mut spec = StudySpec::new(Scenario::main(1), 6, 300, 9);
        spec.workers = Some(1);
        let one = run_study(&spec).unwrap();
        spec.workers = Some(3);
        let three = run_study(&spec).unwrap();
        assert_eq!(one.records, three.records);
        assert_eq!(one.summaries, three.summaries);
    }

    #[test]
    fn truth_per_family() {
        assert_eq!(StudySpec::new(Scenario::main(3), 1, 100, 1).psi_true().unwrap(), 2.0);
        assert_eq!(StudySpec::new("I2_S1".parse().unwrap(), 1, 100, 1).psi_true().unwrap(), 0.5);
    }
}
