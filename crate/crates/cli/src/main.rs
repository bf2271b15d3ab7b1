use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sparse_rrc::embedding::delay_embed;
use sparse_rrc::finance::integrate;
use sparse_rrc::io::{read_series, write_adjacency, write_exposures, write_fitted, write_series};
use sparse_rrc::remittance::{analyze, train_rows, EvalRange, FitOptions};
use sparse_rrc::rrc::{train_autoregressive_with, train_rrc_with};
use sparse_rrc::{
    exposure, load_model, save_model, suggest_lag, DMatrix, EmbeddingConfig, FinancialParams, ModelKind,
    RemittancePanel, RrcError, SimulationGrid, SolverConfig, TimeSeries, TrainOptions,
};

#[derive(Parser)]
#[command(name = "sparse-rrc", version, about = "Sparse regressive reservoir computing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the nonlinear financial model and write the orbit as CSV.
    Simulate(SimulateArgs),
    /// Fit a sparse readout and write the model file.
    Train(TrainArgs),
    /// Roll a trained model forward from the end of a seed series.
    Forecast(ForecastArgs),
    /// Fit remittance-to-deposit models and report per-institution exposure.
    Exposure(ExposureArgs),
    /// Report the first lag where each channel's autocorrelation drops below 1/e.
    SuggestLag(SuggestLagArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Regime {
    Chaotic,
    Periodic,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "chaotic")]
    regime: Regime,
    /// Override `s,c,e`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Option<Vec<f64>>,
    /// Override the initial condition `x1,x2,x3`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ic: Option<Vec<f64>>,
    #[arg(long, default_value_t = 12_000)]
    samples: usize,
    #[arg(long, default_value_t = 120.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-9)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-11)]
    atol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    delta: f64,
    /// Magnitude below which initial coefficients are dropped; 0 keeps all.
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig, CliError> {
        SolverConfig::new(self.delta, self.max_iter, self.epsilon).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    /// Paired targets; without it the model learns `x_t -> x_{t+1}`.
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    lag: usize,
    #[arg(long)]
    order: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Leading fraction of rows used for training.
    #[arg(long, default_value_t = 1.0)]
    train_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale of the random sample used to build the compression.
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ForecastArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    seed_data: PathBuf,
    /// Use only the first N rows of the seed data; the window is their last L rows.
    #[arg(long)]
    seed_end: Option<usize>,
    #[arg(long)]
    horizon: usize,
    #[arg(long)]
    out: PathBuf,
    /// Observed continuation to score the forecast against.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Row of the truth file matching the first forecast step.
    #[arg(long)]
    truth_offset: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalArg {
    All,
    HeldOut,
}

#[derive(clap::Args)]
struct ExposureArgs {
    #[arg(long)]
    remittances: PathBuf,
    #[arg(long)]
    deposits: PathBuf,
    /// Include the previous quarter's remittances.
    #[arg(long)]
    lagged: bool,
    #[arg(long, default_value_t = 0.95)]
    train_frac: f64,
    /// Quarters entering the exposure measure.
    #[arg(long, value_enum, default_value = "all")]
    eval: EvalArg,
    #[command(flatten)]
    solver: SolverArgs,
    /// Exposure report.
    #[arg(long)]
    out: PathBuf,
    /// Nonzero coefficients; defaults to `<out>.adjacency.csv`.
    #[arg(long)]
    adjacency: Option<PathBuf>,
    /// Observed and fitted deposits in long format.
    #[arg(long)]
    fitted: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SuggestLagArgs {
    #[arg(long)]
    input: PathBuf,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<RrcError> for CliError {
    fn from(e: RrcError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn at_path<T>(path: &Path, result: sparse_rrc::Result<T>) -> Result<T, CliError> {
    result.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Train(args) => train(args),
        Command::Forecast(args) => forecast(args),
        Command::Exposure(args) => run_exposure(args),
        Command::SuggestLag(args) => run_suggest_lag(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn triple(values: &Option<Vec<f64>>, flag: &str) -> Result<Option<[f64; 3]>, CliError> {
    match values {
        None => Ok(None),
        Some(v) if v.len() == 3 => Ok(Some([v[0], v[1], v[2]])),
        Some(v) => usage(format!("--{flag} takes 3 comma-separated values, got {}", v.len())),
    }
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut params = match args.regime {
        Regime::Chaotic => FinancialParams::chaotic(),
        Regime::Periodic => FinancialParams::periodic(),
    };
    if let Some([s, c, e]) = triple(&args.params, "params")? {
        params = FinancialParams { s, c, e, ..params };
    }
    if let Some([x0, y0, z0]) = triple(&args.ic, "ic")? {
        params = FinancialParams { x0, y0, z0, ..params };
    }
    let grid = SimulationGrid { t_end: args.t_end, samples: args.samples, rtol: args.rtol, atol: args.atol };
    if let Err(e) = grid.validate() {
        return usage(e.to_string());
    }
    let series = integrate(&params, &grid)?;
    at_path(&args.out, write_series(&series, &args.out))?;
    println!("samples={}", series.len());
    println!("t_end={}", args.t_end);
    println!("params={},{},{}", params.s, params.c, params.e);
    println!("ic={},{},{}", params.x0, params.y0, params.z0);
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    if args.lag == 0 {
        return usage("--lag must be at least 1");
    }
    if args.order == 0 {
        return usage("--order must be at least 1");
    }
    if !(args.train_frac > 0.0 && args.train_frac <= 1.0) {
        return usage(format!("--train-frac must lie in (0, 1], got {}", args.train_frac));
    }
    if !(args.nu > 0.0 && args.nu.is_finite()) {
        return usage(format!("--nu must be positive, got {}", args.nu));
    }
    let solver = args.solver.config()?;
    let embedding = EmbeddingConfig::new(args.lag, args.order).map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = TrainOptions { nu: args.nu, ..TrainOptions::new(embedding, solver, args.seed) };

    let input = at_path(&args.input, read_series(&args.input))?;
    let rows = train_rows(input.len(), args.train_frac)?;
    let model = match &args.target {
        None => train_autoregressive_with(&input.slice(0, rows)?, &opts)?,
        Some(path) => {
            let target = at_path(path, read_series(path))?;
            if target.len() != input.len() {
                return usage(format!(
                    "--target has {} rows but --input has {}",
                    target.len(),
                    input.len()
                ));
            }
            train_rrc_with(&input.slice(0, rows)?, &target.slice(0, rows)?, &opts)?
        }
    };
    at_path(&args.out, save_model(&model, &args.out))?;

    let d = model.diagnostics();
    println!("train_rows={rows}");
    println!("samples={}", d.samples);
    println!("rho={}", model.compression().rows());
    println!("d={}", model.compression().cols());
    println!("rank={}", d.rank);
    println!("nnz={}", d.nnz);
    println!("residual={:e}", d.residual);
    println!("relative_residual={:e}", d.relative_residual);
    println!("unconverged_rows={}", d.unconverged_rows);
    Ok(())
}

fn forecast(args: ForecastArgs) -> Result<(), CliError> {
    if args.horizon == 0 {
        return usage("--horizon must be at least 1");
    }
    let model = at_path(&args.model, load_model(&args.model))?;
    let data = at_path(&args.seed_data, read_series(&args.seed_data))?;
    if data.dim() != model.n() {
        return usage(format!("seed data has {} channels, model expects {}", data.dim(), model.n()));
    }
    let end = args.seed_end.unwrap_or(data.len());
    if end > data.len() {
        return usage(format!("--seed-end {end} exceeds the {} seed rows", data.len()));
    }
    if end < model.lag() {
        return usage(format!("need at least L = {} seed rows, got {end}", model.lag()));
    }
    let window = delay_embed(&data, model.lag(), end)?;
    let predicted = model.forecast(&window, args.horizon)?;

    let (last, dt) = match data.times() {
        Some(t) => (t[end - 1], data.dt().unwrap_or(1.0)),
        None => ((end - 1) as f64, 1.0),
    };
    let times = (1..=args.horizon).map(|k| last + k as f64 * dt).collect();
    let labels = data
        .labels()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (1..=model.n()).map(|j| format!("x{j}")).collect());
    let series = TimeSeries::new(predicted.clone())?.with_times(times)?.with_labels(labels.clone())?;
    at_path(&args.out, write_series(&series, &args.out))?;
    println!("horizon={}", args.horizon);

    if let Some(path) = &args.truth {
        let truth = at_path(path, read_series(path))?;
        if truth.dim() != model.n() {
            return usage(format!("truth has {} channels, model expects {}", truth.dim(), model.n()));
        }
        let offset = args.truth_offset.unwrap_or(0);
        let count = truth.len().saturating_sub(offset).min(args.horizon);
        if count == 0 {
            return Err(RrcError::InvalidInput(format!("truth has no rows at offset {offset}")).into());
        }
        let observed = truth.values().rows(offset, count).clone_owned();
        let scores = exposure(&observed, &predicted.rows(0, count).clone_owned())?;
        println!("scored_steps={count}");
        for (label, e) in labels.iter().zip(scores) {
            println!("nrmse_{label}={e:e}");
        }
    }
    Ok(())
}

fn panel_matrix(series: &TimeSeries) -> DMatrix<f64> {
    series.values().clone()
}

fn default_adjacency(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".adjacency.csv");
    out.with_file_name(name)
}

fn run_exposure(args: ExposureArgs) -> Result<(), CliError> {
    if !(args.train_frac > 0.0 && args.train_frac <= 1.0) {
        return usage(format!("--train-frac must lie in (0, 1], got {}", args.train_frac));
    }
    let solver = args.solver.config()?;
    let remittances = at_path(&args.remittances, read_series(&args.remittances))?;
    let deposits = at_path(&args.deposits, read_series(&args.deposits))?;
    if remittances.len() != deposits.len() {
        return usage(format!(
            "remittances have {} quarters but deposits have {}",
            remittances.len(),
            deposits.len()
        ));
    }
    let kind = if args.lagged { ModelKind::Lagged } else { ModelKind::NonLagged };
    let needed = if args.lagged { 3 } else { 2 };
    if remittances.len() < needed {
        return usage(format!("the {} model needs at least {needed} quarters, got {}", kind.name(), remittances.len()));
    }
    let panel = RemittancePanel::new(panel_matrix(&remittances), panel_matrix(&deposits))?;
    let range = match args.eval {
        EvalArg::All => EvalRange::All,
        EvalArg::HeldOut => EvalRange::HeldOut,
    };
    let opts = FitOptions { solver, train_fraction: args.train_frac };
    let (model, report) = analyze(&panel, kind, &opts, range)?;

    at_path(&args.out, write_exposures(&report.exposures, &args.out))?;
    let adjacency = args.adjacency.clone().unwrap_or_else(|| default_adjacency(&args.out));
    at_path(&adjacency, write_adjacency(&model.edges(), &adjacency))?;
    if let Some(path) = &args.fitted {
        let periods: Vec<String> = match remittances.times() {
            Some(t) => t.iter().map(|v| v.to_string()).collect(),
            None => panel.period_labels().to_vec(),
        };
        at_path(path, write_fitted(&report, &periods, path))?;
    }

    println!("model={}", kind.name());
    println!("train_rows={}", model.train_rows);
    println!("first_quarter={}", report.first_quarter);
    println!("rank={}", model.rank);
    println!("nnz={}", model.nnz());
    for (j, e) in report.exposures.iter().enumerate() {
        println!("exposure_{}={e:e}", j + 1);
    }
    Ok(())
}

fn run_suggest_lag(args: SuggestLagArgs) -> Result<(), CliError> {
    let series = at_path(&args.input, read_series(&args.input))?;
    let suggestion = suggest_lag(&series)?;
    let labels: Vec<String> = series
        .labels()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (1..=series.dim()).map(|j| format!("x{j}")).collect());
    for (label, channel) in labels.iter().zip(&suggestion.channels) {
        if channel.degenerate {
            eprintln!("warning: channel {label} is constant; autocorrelation undefined, reporting lag 1");
        }
        println!("lag_{label}={}", channel.lag);
    }
    println!("suggested_lag={}", suggestion.suggested);
    Ok(())
}
