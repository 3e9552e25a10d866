use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{ArgAction, Args, Parser, Subcommand};
use distlogit::{
    case_presets, covariance_of, fit_estimator, generate_data, io, partition, run_monte_carlo,
    Case, EngineConfig, EstimatorKind, FailurePolicy, InformationForm, SimConfig, Strategy,
};
use serde::Serialize;

mod manifest;

use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "distlogit", version, about = "One-shot distributed logistic regression for rare events")]
struct Cli {
    /// Cap on worker and replication threads [default: available parallelism].
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Set to false to print progress lines on stdout.
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one estimator to a CSV file and report its covariance.
    Fit(FitArgs),
    /// Run a Monte Carlo study on synthetic rare-events data.
    Simulate(SimulateArgs),
    /// Build a partition plan and report per-shard class counts.
    Partition(PartitionArgs),
    /// Write one synthetic dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// gmle, rmle, us or ipw.
    #[arg(long, default_value = "ipw")]
    estimator: EstimatorKind,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "y")]
    label_col: String,
    /// fail-fast or drop-and-warn.
    #[arg(long, default_value = "fail-fast")]
    failure_policy: FailurePolicy,
    /// finite or limit.
    #[arg(long, default_value = "finite")]
    information: InformationForm,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct DataArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    p: usize,
    /// c in alpha* = -c log N.
    #[arg(long, default_value_t = 0.45)]
    alpha_coef: f64,
    /// Comma-separated slopes [default: all ones].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Option<Vec<f64>>,
    /// AR(1) correlation of the covariates.
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DataArgs {
    fn sim_config(&self, k: usize) -> anyhow::Result<SimConfig> {
        let mut config = SimConfig::new(self.n, k);
        config.p = self.p;
        config.beta_star = self.beta.clone().unwrap_or_else(|| vec![1.0; self.p]);
        config.alpha_coef = self.alpha_coef;
        config.ar_rho = self.rho;
        config.base_seed = self.seed;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Preset worker count: 1 or 2.
    #[arg(long)]
    case: Option<Case>,
    /// Explicit worker count; overrides --case.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 500)]
    m: usize,
    #[arg(long, value_delimiter = ',', default_value = "rmle,us,ipw")]
    estimators: Vec<EstimatorKind>,
    /// Also summarise the first worker's local estimate.
    #[arg(long)]
    include_local: bool,
    #[arg(long, default_value = "drop-and-warn")]
    failure_policy: FailurePolicy,
    #[arg(long, default_value = "finite")]
    information: InformationForm,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PartitionArgs {
    #[arg(long)]
    input: PathBuf,
    /// random or copy.
    #[arg(long, default_value = "copy")]
    strategy: Strategy,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "y")]
    label_col: String,
    /// Include every shard's row indices in the output.
    #[arg(long)]
    include_indices: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

/// Failures that are properties of the data rather than of the invocation.
#[derive(Debug)]
struct Statistical(distlogit::Error);

impl std::fmt::Display for Statistical {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for Statistical {}

fn classify(e: distlogit::Error) -> anyhow::Error {
    use distlogit::Error::*;
    match e {
        LocalFit { .. } | Precondition(_) | Singular(_) => Statistical(e).into(),
        other => other.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Statistical>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let progress = |msg: &str| {
        if !cli.quiet {
            println!("{msg}");
        }
    };
    let start = Instant::now();
    match &cli.command {
        Command::Fit(args) => cmd_fit(args, start, &progress),
        Command::Simulate(args) => cmd_simulate(args, start, &progress),
        Command::Partition(args) => cmd_partition(args, start, &progress),
        Command::Generate(args) => cmd_generate(args, start, &progress),
    }
}

fn read_input(path: &Path, label_col: &str) -> anyhow::Result<distlogit::Dataset> {
    io::read_csv_path(path, label_col).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct FitOutput {
    fit: distlogit::FitDocument,
    covariance: Option<distlogit::CovarianceReport>,
    covariance_error: Option<String>,
}

fn cmd_fit(args: &FitArgs, start: Instant, progress: &dyn Fn(&str)) -> anyhow::Result<()> {
    let data = read_input(&args.input, &args.label_col)?;
    progress(&format!(
        "read {} rows, {} positives, {} features",
        data.n_rows(),
        data.n_positive(),
        data.n_features()
    ));
    let engine = EngineConfig { failure_policy: args.failure_policy, ..EngineConfig::default() };
    let fit = fit_estimator(&data, args.estimator, args.k, args.seed, &engine).map_err(classify)?;
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    let (covariance, covariance_error) = match covariance_of(&fit, &data, args.information) {
        Ok(c) => {
            if c.rmle_bias_warning {
                eprintln!(
                    "warning: K is large relative to sqrt(N e^alpha); RMLE bias may dominate its standard error"
                );
            }
            (Some(c), None)
        }
        Err(e) => {
            eprintln!("warning: covariance unavailable: {e}");
            (None, Some(e.to_string()))
        }
    };
    progress(&format!("theta_hat = {:?}", fit.theta_hat.to_vec()));
    write_json(&args.out, &FitOutput { fit: fit.document(), covariance, covariance_error })?;
    Manifest::new("fit", args, args.seed, vec![&args.out], start).write_beside(&args.out)
}

fn cmd_simulate(args: &SimulateArgs, start: Instant, progress: &dyn Fn(&str)) -> anyhow::Result<()> {
    let k = match (args.k, args.case) {
        (Some(k), _) => k,
        (None, Some(case)) => case_presets(case, args.data.n)?,
        (None, None) => bail!("pass --case or --k"),
    };
    let mut config = args.data.sim_config(k)?;
    config.m_reps = args.m;
    config.estimators = args.estimators.clone();
    config.include_local = args.include_local;
    config.failure_policy = args.failure_policy;
    config.information_form = args.information;
    config.validate()?;

    progress(&format!("simulating N = {}, K = {k}, M = {}", config.n_total, config.m_reps));
    let report = run_monte_carlo(&config).map_err(classify)?;
    for s in &report.estimators {
        if s.n_failed > 0 {
            eprintln!("warning: {} failed in {} of {} replications", s.estimator, s.n_failed, args.m);
        }
        progress(&format!("{}: bias {:.4} se {:.4} rmse {:.4}", s.estimator, s.bias, s.se, s.rmse));
    }

    std::fs::create_dir_all(&args.out)?;
    let json = args.out.join("report.json");
    let csv = args.out.join("table.csv");
    write_json(&json, &report)?;
    std::fs::write(&csv, report.to_csv_string())?;
    Manifest::new("simulate", &config, config.base_seed, vec![&json, &csv], start)
        .write(&args.out.join("manifest.json"))
}

fn cmd_partition(args: &PartitionArgs, start: Instant, progress: &dyn Fn(&str)) -> anyhow::Result<()> {
    let data = read_input(&args.input, &args.label_col)?;
    let plan = partition(&data, args.strategy, args.k, args.seed).map_err(classify)?;
    for (j, c) in plan.counts(&data).iter().enumerate() {
        eprintln!("shard {j}: {} positives, {} negatives", c.positives, c.negatives);
    }
    for j in plan.sparse_negative_shards(&data) {
        eprintln!("warning: shard {j} holds fewer than one negative per ten positives");
    }
    progress(&format!("plan checksum {}", plan.checksum()));
    write_json(&args.out, &plan.summary(args.include_indices))?;
    Manifest::new("partition", args, args.seed, vec![&args.out], start).write_beside(&args.out)
}

fn cmd_generate(args: &GenerateArgs, start: Instant, progress: &dyn Fn(&str)) -> anyhow::Result<()> {
    let config = args.data.sim_config(1)?;
    let data = generate_data(&config, args.data.seed)?;
    progress(&format!("generated {} rows, {} positives", data.n_rows(), data.n_positive()));
    io::write_csv_path(&data, &args.out)?;
    Manifest::new("generate", &config, args.data.seed, vec![&args.out], start).write_beside(&args.out)
}
