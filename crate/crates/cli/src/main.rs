//! `mvcolor` command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvcolor::{DistanceMode, Error, ErrorKind, Result};

mod commands;
mod config;

use config::{RunConfig, Targets};

#[derive(Parser, Debug)]
#[command(name = "mvcolor", version, about = "Multi-view underwater color restoration")]
struct Cli {
    /// Raise log verbosity (-v debug, -vv trace). `RUST_LOG` takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset with ground truth.
    Simulate(SimulateArgs),
    /// Restore target images by fitting the image formation model.
    Restore(RunArgs),
    /// Closest-observation stitching baseline.
    Stitch(RunArgs),
    /// Compare images against ground truth and color charts.
    Evaluate(EvaluateArgs),
    /// Residual, fit-curve, timing and parameter reports for a restore run.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// One of corridor, two_plane, flat_chart.
    #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
    preset: Option<String>,
    /// Scene file (TOML) naming a preset plus overrides.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    views: Option<usize>,
}

/// Flags mirror [`RunConfig`]; a flag wins over the config file.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `all` or a comma-separated list of image ids.
    #[arg(long)]
    targets: Option<String>,
    /// Pair only views whose id is within this distance of the target id.
    #[arg(long)]
    window: Option<u32>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    low_pct: Option<f64>,
    #[arg(long)]
    high_pct: Option<f64>,
    /// `range` (distance to the camera centre) or `depth` (axial).
    #[arg(long, value_parser = parse_distance_mode)]
    distance_mode: Option<DistanceMode>,
    /// Parameter groups held fixed: J, beta, B, gamma.
    #[arg(long)]
    freeze: Option<String>,
    /// Single coefficient per channel (gamma = beta).
    #[arg(long)]
    tied: bool,
    /// Starting parameters file (same format as truth/params.txt).
    #[arg(long)]
    init_params: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Targets processed in parallel.
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_distance_mode(s: &str) -> std::result::Result<DistanceMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.dataset {
            cfg.dataset = v;
        }
        if let Some(v) = self.out {
            cfg.out = v;
        }
        if let Some(v) = self.targets {
            cfg.targets = Targets::parse(&v)?;
        }
        if self.window.is_some() {
            cfg.window = self.window;
        }
        if let Some(v) = self.lr {
            cfg.adam.learning_rate = v;
        }
        if let Some(v) = self.steps {
            cfg.adam.steps = v;
        }
        if let Some(v) = self.log_every {
            cfg.adam.log_every = v;
        }
        if let Some(v) = self.low_pct {
            cfg.low_pct = v;
        }
        if let Some(v) = self.high_pct {
            cfg.high_pct = v;
        }
        if let Some(v) = self.distance_mode {
            cfg.distance_mode = v;
        }
        if let Some(v) = self.freeze {
            cfg.freeze = v;
        }
        cfg.tied |= self.tied;
        if self.init_params.is_some() {
            cfg.init_params = self.init_params;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directory of images to score (`NAME.png`, optionally `NAME.f32`).
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth `NAME.png`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Chart annotation file.
    #[arg(long)]
    charts: Option<PathBuf>,
    /// Comma-separated subset of psnr, ssim, ciede2000, psi_bar.
    #[arg(long)]
    metrics: Option<String>,
    /// Label written in the method column.
    #[arg(long, default_value = "restored")]
    method: String,
    /// Score the raw float dumps instead of the normalized 8-bit images.
    #[arg(long)]
    raw: bool,
    /// Output table; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory of a `restore` run.
    #[arg(long)]
    restored: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `all` (every fitted target) or a comma-separated list of ids.
    #[arg(long, default_value = "all")]
    targets: String,
    /// Residuals drawn per target.
    #[arg(long, default_value_t = mvcolor::diagnostics::DEFAULT_SAMPLE_CAP)]
    sample_cap: usize,
    /// Pixels with the widest distance span to trace.
    #[arg(long, default_value_t = 10)]
    tracks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(a.preset.as_deref(), a.scene.as_deref(), &a.out, a.seed, a.noise, a.views),
        Command::Restore(a) => commands::restore(&a.resolve()?),
        Command::Stitch(a) => commands::stitch(&a.resolve()?),
        Command::Evaluate(a) => commands::evaluate(&commands::EvaluateOptions {
            pred: a.pred,
            truth: a.truth,
            charts: a.charts,
            metrics: a.metrics,
            method: a.method,
            raw: a.raw,
            out: a.out,
        }),
        Command::Diagnose(a) => commands::diagnose(&commands::DiagnoseOptions {
            dataset: a.dataset,
            restored: a.restored,
            out: a.out,
            targets: Targets::parse(&a.targets)?,
            sample_cap: a.sample_cap,
            tracks: a.tracks,
            seed: a.seed,
        }),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
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
    init_logging(cli.verbose, cli.quiet);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
