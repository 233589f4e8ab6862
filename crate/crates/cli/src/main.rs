mod config;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sepode::estimator::{evaluation_grid, identifiability_report_with, FitResult, DEFAULT_REFINE};
use sepode::experiments::{rate_check, rng_for, run_monte_carlo, simulate, Data, Design, Prepared};
use sepode::ode::{solve_ode, OdeModel, Trajectory};
use sepode::Error;

use config::{ConfigFile, KEYS_HELP};

const DEFAULT_LADDER: [usize; 5] = [100, 200, 400, 800, 1600];
const DEFAULT_RATE_REPLICATES: usize = 200;

#[derive(Debug)]
pub enum AppError {
    Core(Error),
    Io(String),
}

impl AppError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        AppError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            AppError::Io(_) => 3,
            AppError::Core(e) if e.is_non_identifiable() => 4,
            AppError::Core(e) => core_code(e),
        }
    }
}

fn core_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => 1,
        Error::NonIdentifiable { .. } => 4,
        Error::Bootstrap { source, .. } => core_code(source),
        _ => 2,
    }
}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        AppError::Core(e)
    }
}

#[derive(Parser)]
#[command(name = "sepode", version, about = "Closed-form estimation for separable ODE models")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one noisy data set from the configured model and design.
    #[command(after_help = KEYS_HELP)]
    Simulate(Common),
    /// Estimate theta, xi and nu from a data CSV.
    #[command(after_help = KEYS_HELP)]
    Fit {
        #[command(flatten)]
        common: Common,
        /// Data CSV with columns t,replicate,y1..yd.
        #[arg(long)]
        data: PathBuf,
    },
    /// Monte Carlo study: summary CSV plus a per-replicate CSV next to it.
    #[command(after_help = KEYS_HELP)]
    Mc {
        #[command(flatten)]
        common: Common,
        /// Overrides run.replicates.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Empirical convergence rate of theta_hat over run.ladder.
    #[command(after_help = KEYS_HELP)]
    Rate {
        #[command(flatten)]
        common: Common,
        /// Replicates per rung (default: run.replicates, else 200).
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Spectrum and null space of C, from data or from the true trajectory.
    #[command(after_help = KEYS_HELP)]
    Identify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code())
        }
    }
}

fn report(e: &AppError) {
    match e {
        AppError::Io(msg) => eprintln!("error: {msg}"),
        AppError::Core(err) => {
            eprintln!("error: {err}");
            let mut inner = err;
            while let Error::Bootstrap { source, .. } = inner {
                inner = source;
            }
            if let Error::NonIdentifiable { rank, null_space, .. } = inner {
                eprintln!("numerical rank of C: {rank}");
                for v in null_space {
                    eprintln!("null direction: {v:?}");
                }
            }
        }
    }
}

fn load(path: &Path) -> Result<ConfigFile, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    Ok(ConfigFile::parse(&text)?)
}

fn run(cmd: Command) -> Result<(), AppError> {
    match cmd {
        Command::Simulate(c) => cmd_simulate(&c),
        Command::Fit { common, data } => cmd_fit(&common, &data),
        Command::Mc { common, replicates } => cmd_mc(&common, replicates),
        Command::Rate { common, replicates } => cmd_rate(&common, replicates),
        Command::Identify { common, data } => cmd_identify(&common, data.as_deref()),
    }
}

fn cmd_simulate(c: &Common) -> Result<(), AppError> {
    let cfg = load(&c.config)?;
    let model = cfg.model()?;
    let theta = model.theta_of(&cfg.nu(&model)?)?;
    let xi = cfg.xi()?;
    let design = cfg.design()?;
    let noise = cfg.noise(model.dim())?;
    let seed = c.seed.or(cfg.run.seed).unwrap_or(0);
    let data = simulate(&model, &theta, &xi, &design, &noise, &mut rng_for(seed, 0))?;
    io::write_output(c.out.as_deref(), &io::data_csv(&data, seed))
}

/// The configured design with its times replaced by the ones in the data.
fn design_of(data: &Data, like: &Design) -> Design {
    match (data, like) {
        (Data::Grid(o), _) => Design::Grid { times: o.times().to_vec(), horizon: o.horizon() },
        (Data::Repeated(o), Design::Repeated { replicates, .. }) => {
            Design::Repeated { times: o.times().to_vec(), replicates: *replicates, horizon: o.horizon() }
        }
        (Data::Repeated(o), _) => Design::Repeated { times: o.times().to_vec(), replicates: 1, horizon: o.horizon() },
    }
}

fn load_data(cfg: &ConfigFile, model: &OdeModel, path: &Path) -> Result<(Data, Design), AppError> {
    let design = cfg.design()?;
    let repeated = matches!(design, Design::Repeated { .. });
    let data = io::read_data(path, model.dim(), repeated, design.horizon())?;
    let design = design_of(&data, &design);
    Ok((data, design))
}

#[derive(Serialize)]
struct FitJson<'a> {
    model: &'a str,
    theta_hat: &'a [f64],
    xi_hat: &'a [f64],
    nu_hat: Option<&'a [f64]>,
    nu_converged: Option<bool>,
    nu_distance: Option<f64>,
    sigma_hat: Option<Vec<Vec<f64>>>,
    cond_c: f64,
    criterion_value: f64,
}

fn fit_json(model: &OdeModel, r: &FitResult) -> Vec<u8> {
    let sigma = r.sigma.as_ref().map(|s| (0..s.nrows()).map(|i| s.row(i).iter().copied().collect()).collect());
    let out = FitJson {
        model: model.name(),
        theta_hat: &r.theta,
        xi_hat: &r.xi,
        nu_hat: r.nu.as_deref(),
        nu_converged: r.nu_converged,
        nu_distance: r.nu_distance,
        sigma_hat: sigma,
        cond_c: r.cond_c,
        criterion_value: r.criterion,
    };
    let mut s = serde_json::to_string_pretty(&out).expect("plain data serializes");
    s.push('\n');
    s.into_bytes()
}

fn cmd_fit(c: &Common, data_path: &Path) -> Result<(), AppError> {
    let cfg = load(&c.config)?;
    let model = cfg.model()?;
    let (data, design) = load_data(&cfg, &model, data_path)?;
    let pipeline = cfg.pipeline(&design)?;
    let prepared = Prepared::new(&pipeline, &design, model.dim())?;
    let seed = c.seed.or(cfg.run.seed).unwrap_or(0);
    let result = prepared.estimate(&model, &data, seed)?;
    io::write_output(c.out.as_deref(), &fit_json(&model, &result))
}

/// `out.csv` becomes `out.replicates.csv`.
fn replicates_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.replicates.csv"))
}

fn cmd_mc(c: &Common, replicates: Option<usize>) -> Result<(), AppError> {
    let cfg = load(&c.config)?;
    let mc = cfg.mc_config(c.seed, replicates)?;
    let summary = run_monte_carlo(&mc)?;
    if summary.failures > 0 {
        eprintln!("warning: {} of {} replicates failed", summary.failures, summary.replicates);
    }
    if summary.nu_unconverged > 0 {
        eprintln!("warning: nu search did not converge in {} replicates", summary.nu_unconverged);
    }
    if summary.unreliable {
        eprintln!("warning: failure fraction above the reliability limit; summary is unreliable");
    }
    if let Some(out) = &c.out {
        let m = &mc.model;
        let raw = io::replicates_csv(&summary.raw, m.n_theta(), m.dim(), m.n_nu());
        io::write_output(Some(&replicates_path(out)), &raw)?;
    }
    io::write_output(c.out.as_deref(), &io::summary_csv(&summary))
}

fn cmd_rate(c: &Common, replicates: Option<usize>) -> Result<(), AppError> {
    let cfg = load(&c.config)?;
    let mc = cfg.mc_config(c.seed, Some(1))?;
    let ladder = cfg.run.ladder.clone().unwrap_or_else(|| DEFAULT_LADDER.to_vec());
    let m = replicates.or(cfg.run.replicates).unwrap_or(DEFAULT_RATE_REPLICATES);
    let report = rate_check(&mc, &ladder, m)?;
    if report.floor_dominated {
        eprintln!("warning: error at the largest rung is near the noiseless floor; the slope reflects discretization");
    }
    io::write_output(c.out.as_deref(), &io::rate_csv(&report))
}

#[derive(Serialize)]
struct IdentifyJson<'a> {
    model: &'a str,
    source: &'a str,
    identifiable: bool,
    rcond: f64,
    rank: usize,
    eigenvalues: &'a [f64],
    null_space: &'a [Vec<f64>],
    c: Vec<Vec<f64>>,
}

fn cmd_identify(c: &Common, data_path: Option<&Path>) -> Result<(), AppError> {
    let cfg = load(&c.config)?;
    let model = cfg.model()?;
    let (x, design, source): (Trajectory, Design, &str) = match data_path {
        Some(p) => {
            let (data, design) = load_data(&cfg, &model, p)?;
            let prepared = Prepared::new(&cfg.pipeline(&design)?, &design, model.dim())?;
            (prepared.smooth(&data)?, design, "data")
        }
        None => {
            let design = cfg.design()?;
            let theta = model.theta_of(&cfg.nu(&model)?)?;
            let xi = cfg.xi()?;
            let grid = match &cfg.pipeline {
                Some(_) => Prepared::new(&cfg.pipeline(&design)?, &design, model.dim())?.grid().to_vec(),
                None => evaluation_grid(design.times(), design.horizon(), DEFAULT_REFINE),
            };
            (solve_ode(&model, &theta, &xi, &grid)?, design, "truth")
        }
    };
    let opts = match &cfg.pipeline {
        Some(_) => Prepared::new(&cfg.pipeline(&design)?, &design, model.dim())?.fit_options().clone(),
        None => Default::default(),
    };
    let r = identifiability_report_with(&model, &x, &opts.weights, opts.rule)?;
    let out = IdentifyJson {
        model: model.name(),
        source,
        identifiable: r.identifiable(opts.cond_threshold),
        rcond: r.rcond,
        rank: r.rank,
        eigenvalues: &r.eigenvalues,
        null_space: &r.null_space,
        c: (0..r.c.nrows()).map(|i| r.c.row(i).iter().copied().collect()).collect(),
    };
    let mut s = serde_json::to_string_pretty(&out).expect("plain data serializes");
    s.push('\n');
    io::write_output(c.out.as_deref(), s.as_bytes())
}
