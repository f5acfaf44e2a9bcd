//! `estimate` and `diagnose`: analyses of a user-supplied CSV.

use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use proxci::bridge::{fit_att_outcome_bridge, fit_att_treatment_bridge, fit_outcome_bridge, fit_treatment_bridge};
use proxci::data::{validate_dataset, ProxyDataset, RoleMap, Table};
use proxci::diagnostics::{moment_conditioning, partial_correlation_diagnostic, MomentConditioning, PartialCorrelations};
use proxci::estimators::{att_estimators, covariate_terms, pdr, pipw, por, standard_dr, ProximalLayouts};
use proxci::layout::{Term, TermLayout};
use proxci::report::{EstimateReport, EstimatorTag};
use proxci::Error;

use crate::{read_text, to_json, write_all, CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    #[default]
    Ate,
    Att,
}

/// Working-model layouts. Omitted layouts take their defaults; the
/// instruments default to the `q` layout and the targets to the `h` layout,
/// so interactions added to one bridge enlarge the other's moments as well.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    pub h: Option<TermLayout>,
    pub q: Option<TermLayout>,
    pub instrument: Option<TermLayout>,
    pub target: Option<TermLayout>,
    /// Terms interacted with `A` in the outcome bridge.
    #[serde(default)]
    pub h_interactions: Vec<Term>,
    /// Terms interacted with `A` in the treatment bridge.
    #[serde(default)]
    pub q_interactions: Vec<Term>,
}

/// Analysis of one CSV dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub input: Option<PathBuf>,
    pub roles: Option<RoleMap>,
    #[serde(default)]
    pub target: Option<Target>,
    #[serde(default)]
    pub layouts: LayoutSpec,
    #[serde(default)]
    pub estimators: Option<Vec<EstimatorTag>>,
    /// Covariates of the baseline AIPW estimator; all of `X, Z, W` by default.
    #[serde(default)]
    pub dr_covariates: Option<Vec<Term>>,
    /// JSON report path.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// JSON analysis config; its fields override the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Outcome column.
    #[arg(long, default_value = "Y")]
    pub outcome: String,
    /// Treatment column.
    #[arg(long, default_value = "A")]
    pub treatment: String,
    /// Measured covariate columns, comma separated. When none of --x, --z
    /// and --w is given, columns named `X<k>`, `Z<k>` and `W<k>` are used.
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<String>,
    /// Treatment-confounding proxy columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub z: Vec<String>,
    /// Outcome-confounding proxy columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub w: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub target: Option<Target>,
    /// Estimators, comma separated; all for the target when omitted.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Vec<String>,
    /// JSON report path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Print the JSON report on stdout instead of the text summary.
    #[arg(long)]
    pub json: bool,
}

fn load_config(path: Option<&Path>) -> CliResult<Option<AnalysisConfig>> {
    let Some(path) = path else { return Ok(None) };
    serde_json::from_str(&read_text(path)?).map(Some).map_err(|e| Failure::context(e.into(), "analysis config"))
}

/// Reads and validates the dataset named by the config or the flags.
fn load_data(args: &DataArgs, config: Option<&AnalysisConfig>) -> CliResult<ProxyDataset> {
    let input = config
        .and_then(|c| c.input.clone())
        .or_else(|| args.input.clone())
        .ok_or_else(|| Failure::usage("no input CSV given (--input or `input` in the config)"))?;
    let file = File::open(&input).map_err(|e| Failure::usage(format!("{}: {e}", input.display())))?;
    let what = format!("input {}", input.display());
    let table = Table::from_csv(file).map_err(|e| Failure::context(e, &what))?;
    let roles = config.and_then(|c| c.roles.clone()).unwrap_or_else(|| {
        let no_proxies = args.x.is_empty() && args.z.is_empty() && args.w.is_empty();
        let pick = |given: &[String], prefix: char| {
            if no_proxies {
                prefixed(table.headers(), prefix)
            } else {
                given.to_vec()
            }
        };
        RoleMap {
            y: args.outcome.clone(),
            a: args.treatment.clone(),
            x: pick(&args.x, 'X'),
            z: pick(&args.z, 'Z'),
            w: pick(&args.w, 'W'),
        }
    });
    validate_dataset(&table, &roles).map_err(|e| Failure::context(e, &what))
}

/// Headers made of `prefix` followed by digits, e.g. `X1`, `X2`.
fn prefixed(headers: &[String], prefix: char) -> Vec<String> {
    headers
        .iter()
        .filter(|h| h.strip_prefix(prefix).is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())))
        .cloned()
        .collect()
}

fn layouts(data: &ProxyDataset, spec: &LayoutSpec, target: Target) -> ProximalLayouts {
    let base = match target {
        Target::Ate => ProximalLayouts::ate_default(data),
        Target::Att => ProximalLayouts::att_default(data),
    };
    let h = spec.h.clone().unwrap_or(base.h).with_interactions(spec.h_interactions.clone());
    let q = spec.q.clone().unwrap_or(base.q).with_interactions(spec.q_interactions.clone());
    ProximalLayouts {
        instrument: spec.instrument.clone().unwrap_or_else(|| q.clone()),
        target: spec.target.clone().unwrap_or_else(|| h.clone()),
        h,
        q,
    }
}

fn selected_estimators(args: &EstimateArgs, config: Option<&AnalysisConfig>, target: Target) -> CliResult<Vec<EstimatorTag>> {
    let allowed: &[EstimatorTag] = match target {
        Target::Ate => &EstimatorTag::ATE,
        Target::Att => &EstimatorTag::ATT,
    };
    let chosen = match config.and_then(|c| c.estimators.clone()) {
        Some(tags) => tags,
        None if args.estimators.is_empty() => allowed.to_vec(),
        None => args
            .estimators
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<EstimatorTag>, Error>>()
            .map_err(|e| Failure::context(e, "--estimators"))?,
    };
    if let Some(t) = chosen.iter().find(|t| !allowed.contains(t)) {
        return Err(Failure::usage(format!("estimator {t} does not match target {target:?}")));
    }
    Ok(chosen)
}

fn estimate(
    data: &ProxyDataset,
    layouts: &ProximalLayouts,
    target: Target,
    tags: &[EstimatorTag],
    dr_covariates: &[Term],
) -> CliResult<Vec<EstimateReport>> {
    let needs = |list: &[EstimatorTag]| tags.iter().any(|t| list.contains(t));
    let h_fit = |att: bool| {
        let fit = if att { fit_att_outcome_bridge } else { fit_outcome_bridge };
        fit(data, &layouts.h, &layouts.instrument).map_err(|e| Failure::context(e, "outcome bridge"))
    };
    let q_fit = |att: bool| {
        let fit = if att { fit_att_treatment_bridge } else { fit_treatment_bridge };
        fit(data, &layouts.q, &layouts.target).map_err(|e| Failure::context(e, "treatment bridge"))
    };
    let mut reports = Vec::with_capacity(tags.len());
    match target {
        Target::Ate => {
            let h = if needs(&[EstimatorTag::Por, EstimatorTag::Pdr]) { Some(h_fit(false)?) } else { None };
            let q = if needs(&[EstimatorTag::Pipw, EstimatorTag::Pdr]) { Some(q_fit(false)?) } else { None };
            for &tag in tags {
                let report = match tag {
                    EstimatorTag::Dr => standard_dr(data, dr_covariates),
                    EstimatorTag::Por => por(data, h.as_ref().expect("fitted")),
                    EstimatorTag::Pipw => pipw(data, q.as_ref().expect("fitted")),
                    EstimatorTag::Pdr => pdr(data, h.as_ref().expect("fitted"), q.as_ref().expect("fitted")),
                    _ => unreachable!("checked against the target"),
                };
                reports.push(report.map_err(|e| Failure::context(e, tag.as_str()))?);
            }
        }
        Target::Att => {
            let all = att_estimators(data, &h_fit(true)?, &q_fit(true)?).map_err(|e| Failure::context(e, "ATT"))?;
            reports.extend(all.into_iter().filter(|r| tags.contains(&r.estimator)));
        }
    }
    Ok(reports)
}

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let config = load_config(args.data.config.as_deref())?;
    let config = config.as_ref();
    let data = load_data(&args.data, config)?;
    let target = config.and_then(|c| c.target).or(args.target).unwrap_or_default();
    let tags = selected_estimators(args, config, target)?;
    let spec = config.map(|c| c.layouts.clone()).unwrap_or_default();
    let layouts = layouts(&data, &spec, target);
    let dr_covariates =
        config.and_then(|c| c.dr_covariates.clone()).unwrap_or_else(|| covariate_terms(&data, true, true, true));
    let reports = estimate(&data, &layouts, target, &tags, &dr_covariates)?;

    let json = to_json(&reports);
    if let Some(path) = config.and_then(|c| c.output.clone()).or_else(|| args.output.clone()) {
        write_all(Some(&path), &json)?;
    }
    if args.json {
        write_all(None, &json)
    } else {
        let text: String = reports.iter().map(|r| format!("{r}\n")).collect();
        write_all(None, &text)
    }
}

#[derive(Serialize)]
struct Diagnostics {
    n: usize,
    partial_correlations: PartialCorrelations,
    moment_conditioning: MomentConditioning,
}

pub fn cmd_diagnose(args: &DataArgs) -> CliResult<()> {
    let config = load_config(args.config.as_deref())?;
    let data = load_data(args, config.as_ref())?;
    let report = Diagnostics {
        n: data.n(),
        partial_correlations: partial_correlation_diagnostic(&data)
            .map_err(|e| Failure::context(e, "partial correlations"))?,
        moment_conditioning: moment_conditioning(&data).map_err(|e| Failure::context(e, "moment conditioning"))?,
    };
    write_all(None, &to_json(&report))
}
