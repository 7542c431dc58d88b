use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use varest::harness::{self, RunOptions};
use varest::simgen::ScenarioOverrides;
use varest::{
    BootstrapConfig, Context, CovariateModel, EstimateOptions, EstimatorId, SelectionOptions,
    VarianceMethod, XDist,
};

#[derive(Parser)]
#[command(name = "varest", version, about = "Unbiased estimation of signal and noise levels in linear models with known covariate distribution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation scenario and write per-replication records and a summary.
    Simulate(SimulateArgs),
    /// Apply estimators to a dataset CSV with header `y,x1,...,xp`.
    Estimate(EstimateArgs),
    /// Recompute the summary of an existing records CSV.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct SelectArgs {
    /// Select covariates on one part of the rows and estimate on the rest.
    #[arg(long)]
    select_split: bool,
    #[arg(long, default_value_t = 0.5)]
    select_split_fraction: f64,
    /// Maximum number of selected covariates, or `none`.
    #[arg(long, default_value = "50")]
    select_cap: String,
}

impl SelectArgs {
    fn options(&self) -> Result<SelectionOptions, CliError> {
        let cap = match self.select_cap.as_str() {
            "none" => None,
            s => Some(s.parse::<usize>().map_err(|_| {
                CliError::Config(format!("--select-cap expects a count or `none`, got `{s}`"))
            })?),
        };
        Ok(SelectionOptions {
            split: self.select_split,
            split_fraction: self.select_split_fraction,
            cap,
        })
    }
}

#[derive(Args)]
struct BootArgs {
    /// Also run the bootstrap empirical estimator.
    #[arg(long)]
    empirical: bool,
    /// Initial estimator for the empirical estimator.
    #[arg(long, default_value = "naive")]
    initial: String,
    /// Number of bootstrap resamples.
    #[arg(long, default_value_t = 200)]
    boot: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML scenario file; flags override its fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    tau2: Option<f64>,
    #[arg(long)]
    tau2b: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    b_size: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// gaussian, t:<df> or rademacher-mix:<weight>
    #[arg(long)]
    x_dist: Option<String>,
    /// Comma-separated estimator ids.
    #[arg(long, default_value = "naive,single,selection,oracle")]
    estimators: String,
    /// theory, gaussian-plugin or tilde
    #[arg(long)]
    variance: Option<String>,
    #[command(flatten)]
    select: SelectArgs,
    #[command(flatten)]
    boot: BootArgs,
    #[arg(long, default_value = "records.csv")]
    out_records: PathBuf,
    #[arg(long, default_value = "summary.csv")]
    out_summary: PathBuf,
    /// Record wall time per estimate (records are then not reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    /// TOML covariate model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "naive")]
    estimators: String,
    /// gaussian-plugin or tilde
    #[arg(long)]
    variance: Option<String>,
    /// Report max(0, .) of both point estimates.
    #[arg(long)]
    clamp: bool,
    /// Center the response before estimating.
    #[arg(long)]
    center_y: bool,
    /// Seed for bootstrap resampling.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    select: SelectArgs,
    #[command(flatten)]
    boot: BootArgs,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    true_tau2: f64,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    /// Bad input or configuration: exit 2.
    Config(String),
    /// Failure while computing: exit 1.
    Runtime(String),
}

impl From<varest::Error> for CliError {
    fn from(e: varest::Error) -> Self {
        use varest::Error as E;
        match e {
            E::Parse { .. }
            | E::Config(_)
            | E::InvalidScenario(_)
            | E::InvalidModel(_)
            | E::InvalidDataset(_)
            | E::InsufficientRecords { .. }
            | E::NearSingularCovariance { .. }
            | E::DimensionMismatch { .. }
            | E::TooFewObservations { .. }
            | E::TooFewColumns { .. }
            | E::MissingOracleCoefficients => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("VAREST_THREADS") {
        match threads.parse::<usize>() {
            Ok(t) if t > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            _ => {
                eprintln!("error: VAREST_THREADS must be a positive integer, got `{threads}`");
                return ExitCode::from(2);
            }
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Summarize(a) => summarize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn parse_estimators(list: &str, empirical: bool) -> Result<Vec<EstimatorId>, CliError> {
    let mut ids = Vec::new();
    for s in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let id: EstimatorId = s.parse()?;
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    if empirical && !ids.contains(&EstimatorId::Empirical) {
        ids.push(EstimatorId::Empirical);
    }
    if ids.is_empty() {
        return Err(CliError::Config("--estimators is empty".into()));
    }
    Ok(ids)
}

fn parse_variance(v: &Option<String>) -> Result<Option<VarianceMethod>, CliError> {
    Ok(v.as_deref().map(str::parse).transpose()?)
}

fn bootstrap_config(b: &BootArgs, seed: u64) -> Result<BootstrapConfig, CliError> {
    let initial: EstimatorId = b.initial.parse()?;
    Ok(BootstrapConfig::new(b.boot, seed, initial)?)
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let file = match &a.scenario {
        Some(path) => ScenarioOverrides::from_toml_str(&read_text(path)?)?,
        None => ScenarioOverrides::default(),
    };
    let flags = ScenarioOverrides {
        n: a.n,
        p: a.p,
        tau2: a.tau2,
        tau2_b: a.tau2b,
        sigma2: a.sigma2,
        b_size: a.b_size,
        reps: a.reps,
        seed: a.seed,
        x_dist: a.x_dist.as_deref().map(str::parse::<XDist>).transpose()?,
    };
    let cfg = file.merge(flags).resolve()?;
    let ids = parse_estimators(&a.estimators, a.boot.empirical)?;
    let opts = RunOptions {
        estimate: EstimateOptions {
            selection: a.select.options()?,
            variance: parse_variance(&a.variance)?,
            bootstrap: bootstrap_config(&a.boot, cfg.seed)?,
        },
        timing: a.timing,
    };
    let records = harness::run_scenario(&cfg, &ids, &opts)?;
    for r in records.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: rep {} estimator {}: {}",
            r.rep,
            r.estimator,
            r.error.as_deref().unwrap_or_default()
        );
    }
    let stats = harness::summarize(&records, cfg.tau2).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = create(&a.out_records)?;
    harness::write_records(&mut out, &records)?;
    out.flush()?;
    let mut out = create(&a.out_summary)?;
    harness::write_summary(&mut out, &stats)?;
    out.flush()?;
    print_table(&stats);
    Ok(())
}

fn print_table(stats: &[harness::SummaryStats]) {
    println!(
        "{:<10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "estimator", "mean", "bias", "se", "rmse", "rmse_sd"
    );
    for s in stats {
        println!(
            "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            s.estimator.as_str(),
            s.mean,
            s.bias,
            s.se,
            s.rmse,
            s.rmse_sd
        );
    }
}

fn estimate(a: EstimateArgs) -> Result<(), CliError> {
    let file = File::open(&a.data)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", a.data.display())))?;
    let raw = varest::io::read_dataset_csv(io::BufReader::new(file))?;
    let model = CovariateModel::from_toml_str(&read_text(&a.model)?, raw.p())?;
    let raw = if a.center_y { raw.centered_y() } else { raw };
    let ds = raw.whiten_with(&model)?;
    let model = model.whitened();
    let ids = parse_estimators(&a.estimators, a.boot.empirical)?;
    if ids.contains(&EstimatorId::Oracle) {
        return Err(CliError::Config(
            "the oracle estimator needs the true coefficients and is only available in simulate".into(),
        ));
    }
    let variance = parse_variance(&a.variance)?;
    if variance == Some(VarianceMethod::Theory) {
        return Err(CliError::Config(
            "theory variances need the true coefficients; use gaussian-plugin or tilde".into(),
        ));
    }
    let seed = match (a.seed, ids.contains(&EstimatorId::Empirical)) {
        (Some(s), _) => s,
        (None, false) => 0,
        (None, true) => {
            return Err(CliError::Config("missing required `--seed` for the empirical estimator".into()))
        }
    };
    let opts = EstimateOptions {
        selection: a.select.options()?,
        variance,
        bootstrap: bootstrap_config(&a.boot, seed)?,
    };
    let ctx = Context::new(&ds, &model, None)?;
    let mut rows = Vec::new();
    for id in ids {
        match ctx.run(id, &opts) {
            Ok(r) => {
                let r = if a.clamp { r.clamped() } else { r };
                rows.push([
                    id.to_string(),
                    r.tau2.to_string(),
                    r.sigma2.to_string(),
                    r.variance_estimate.map(|v| v.to_string()).unwrap_or_default(),
                    r.variance_method.map(|m| m.to_string()).unwrap_or_default(),
                    r.aux_string(),
                    String::new(),
                ]);
            }
            Err(e @ varest::Error::DegenerateZeroEstimator(_))
            | Err(e @ varest::Error::UnsupportedDependenceStructure) => {
                eprintln!("warning: {id}: {e}");
                rows.push([
                    id.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.to_string(),
                ]);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut w = csv::Writer::from_writer(output(&a.out)?);
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["estimator", "tau2_hat", "sigma2_hat", "var_hat", "var_method", "aux", "warning"])
        .map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn summarize(a: SummarizeArgs) -> Result<(), CliError> {
    let file = File::open(&a.records)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", a.records.display())))?;
    let records = harness::read_records(io::BufReader::new(file))?;
    let stats = harness::summarize(&records, a.true_tau2)?;
    let mut out = output(&a.out)?;
    harness::write_summary(&mut out, &stats)?;
    out.flush()?;
    Ok(())
}
