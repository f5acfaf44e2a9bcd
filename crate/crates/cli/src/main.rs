mod analysis;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use proxci::discrete::{identify, law_from_json, oracle, Identification, Law};
use proxci::harness::{emit_tables, run_study, Scenario, StudySpec, TableFormat};
use proxci::report::EstimatorTag;
use proxci::sim::{
    derive_params, simulate, simulate_violation, DerivedParams, PropensityMode, SimConfig, ViolationConfig,
    VIOLATION_TRUE_ATE,
};
use proxci::{Error, ErrorClass};

use analysis::{DataArgs, EstimateArgs};

/// Proximal causal inference: simulation, Monte Carlo studies, estimation
/// and discrete identification.
#[derive(Debug, Parser)]
#[command(name = "proxci", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a dataset from a simulation design and write it as CSV.
    Simulate(SimulateArgs),
    /// Run Monte Carlo studies and print bias/MSE and coverage tables.
    Mc(McArgs),
    /// Estimate treatment effects on a CSV dataset.
    Estimate(EstimateArgs),
    /// Identify counterfactual laws from a discrete joint law.
    IdentifyDiscrete(IdentifyArgs),
    /// Report proxy partial correlations and moment-system conditioning.
    Diagnose(DataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Design {
    Main,
    NoConfounding,
    WeakProxy,
    Violation,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON simulation config; its fields override the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in design used when no config is given.
    #[arg(long, value_enum, default_value = "main")]
    design: Design,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Append the latent confounder as column `U`.
    #[arg(long)]
    with_latent: bool,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct McArgs {
    /// JSON study spec; its fields override the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenarios such as `S1` or `I1_S3`, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "S1")]
    scenario: Vec<String>,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Estimators, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "DR,POR,PIPW,PDR")]
    estimators: Vec<String>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    propensity_mode: Option<PropensityArg>,
    #[arg(long, default_value = "markdown")]
    format: String,
    /// Also write the full study results as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PropensityArg {
    BridgeConsistent,
    Logistic,
}

impl From<PropensityArg> for PropensityMode {
    fn from(p: PropensityArg) -> Self {
        match p {
            PropensityArg::BridgeConsistent => Self::BridgeConsistent,
            PropensityArg::Logistic => Self::Logistic,
        }
    }
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    /// Law JSON with axes labels and a flat probability array.
    #[arg(long)]
    law: PathBuf,
    /// Cross-check against the latent-variable formula; needs `u` in the file.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// A failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn context(err: Error, what: &str) -> Self {
        let code = match err.class() {
            ErrorClass::Usage => 2,
            ErrorClass::Validation => 3,
            ErrorClass::Solver => 4,
            ErrorClass::Identification => 5,
            ErrorClass::Io => 1,
        };
        Self { code, message: format!("{what}: {err}") }
    }

    fn io(err: io::Error, path: &Path) -> Self {
        Self { code: 1, message: format!("{}: {err}", path.display()) }
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::io(e, path))
}

/// Buffered writer to `path`, or stdout.
pub fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p).map_err(|e| Failure::io(e, p))?))),
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

pub fn write_all(path: Option<&Path>, text: &str) -> CliResult<()> {
    let mut out = sink(path)?;
    let target = path.unwrap_or(Path::new("<stdout>"));
    out.write_all(text.as_bytes()).and_then(|()| out.flush()).map_err(|e| Failure::io(e, target))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    text
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let config = match &args.config {
        Some(path) => Some(SimConfig::from_json(&read_text(path)?).map_err(|e| Failure::context(e, "simulation config"))?),
        None => match args.design {
            Design::Main => Some(SimConfig::main_design()),
            Design::NoConfounding => Some(SimConfig::no_confounding()),
            Design::WeakProxy => Some(SimConfig::weak_proxy()),
            Design::Violation => None,
        }
        .map(|base| SimConfig { n: args.n, seed: args.seed, ..base }),
    };
    let fail = |e| Failure::context(e, "simulation");
    let (draw, echo) = match &config {
        Some(cfg) => {
            let derived = derive_params(cfg, cfg.t_0, &cfg.t_x).map_err(fail)?;
            (simulate(cfg).map_err(fail)?, SimulateEcho::Gaussian(Box::new(derived)))
        }
        None => {
            let draw = simulate_violation(&ViolationConfig { n: args.n, seed: args.seed }).map_err(fail)?;
            (draw, SimulateEcho::Violation { psi_true: VIOLATION_TRUE_ATE })
        }
    };
    let mut out = sink(args.output.as_deref())?;
    let latent = args.with_latent.then_some(draw.u.as_slice());
    draw.data.write_csv(&mut out, latent).map_err(|e| Failure::context(e, "writing dataset"))?;
    drop(out);
    // Keep stdout clean for the CSV when no output file is given.
    let echo = to_json(&echo);
    if args.output.is_some() {
        print!("{echo}");
    } else {
        eprint!("{echo}");
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(untagged)]
enum SimulateEcho {
    Gaussian(Box<DerivedParams>),
    Violation { psi_true: f64 },
}

fn study_specs(args: &McArgs) -> CliResult<Vec<StudySpec>> {
    let format_err = |e| Failure::context(e, "study spec");
    let estimators =
        args.estimators.iter().map(|s| s.parse::<EstimatorTag>()).collect::<Result<Vec<_>, _>>().map_err(format_err)?;
    let mut specs = match &args.config {
        Some(path) => {
            let spec: StudySpec = serde_json::from_str(&read_text(path)?).map_err(|e| format_err(e.into()))?;
            vec![spec]
        }
        None => args
            .scenario
            .iter()
            .map(|s| {
                let scenario: Scenario = s.parse().map_err(format_err)?;
                Ok(StudySpec { estimators: estimators.clone(), ..StudySpec::new(scenario, args.reps, args.n, args.seed) })
            })
            .collect::<CliResult<Vec<_>>>()?,
    };
    for spec in &mut specs {
        spec.workers = spec.workers.or(args.workers);
        spec.propensity_mode = spec.propensity_mode.or(args.propensity_mode.map(Into::into));
        spec.validate().map_err(format_err)?;
    }
    Ok(specs)
}

fn cmd_mc(args: &McArgs) -> CliResult<()> {
    let format: TableFormat = args.format.parse().map_err(|e| Failure::context(e, "--format"))?;
    let specs = study_specs(args)?;
    let results = specs
        .iter()
        .map(|spec| run_study(spec).map_err(|e| Failure::context(e, &format!("scenario {}", spec.scenario))))
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(path) = &args.json {
        write_all(Some(path), &to_json(&results))?;
    }
    write_all(args.output.as_deref(), &emit_tables(&results, format))
}

#[derive(Serialize)]
struct IdentifyOutput {
    y_values: Vec<f64>,
    #[serde(flatten)]
    identified: Identification,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<Identification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_oracle_deviation: Option<f64>,
}

fn max_deviation(a: &Identification, b: &Identification) -> f64 {
    let laws = a.y0.iter().chain(&a.y1).flatten().zip(b.y0.iter().chain(&b.y1).flatten());
    laws.map(|(p, q)| (p - q).abs()).fold((a.ate - b.ate).abs(), f64::max)
}

fn cmd_identify(args: &IdentifyArgs) -> CliResult<()> {
    let law = law_from_json(&read_text(&args.law)?).map_err(|e| Failure::context(e, "law file"))?;
    let observable = law.observable();
    let identified = identify(&observable).map_err(|e| Failure::context(e, "identification"))?;
    let oracle = match (&law, args.oracle) {
        (_, false) => None,
        (Law::Latent(latent), true) => Some(oracle(latent).map_err(|e| Failure::context(e, "oracle"))?),
        (Law::Observable(_), true) => {
            return Err(Failure::usage("--oracle needs a law with a latent `u` axis"));
        }
    };
    let output = IdentifyOutput {
        y_values: observable.y_values().to_vec(),
        max_oracle_deviation: oracle.as_ref().map(|o| max_deviation(&identified, o)),
        identified,
        oracle,
    };
    write_all(args.output.as_deref(), &to_json(&output))
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Mc(args) => cmd_mc(args),
        Command::Estimate(args) => analysis::cmd_estimate(args),
        Command::IdentifyDiscrete(args) => cmd_identify(args),
        Command::Diagnose(args) => analysis::cmd_diagnose(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
