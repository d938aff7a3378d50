mod commands;
mod config;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use weakphase::simulator::SpreadWeighting;

use crate::config::{DispersionFlag, Overrides, Preset, WindowFlag};
use crate::failure::Failure;

/// Weak-measurement phase estimation from spectral centroid shifts.
#[derive(Debug, Parser)]
#[command(name = "weakphase", version, propagate_version = true)]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one measurement and write the post-selected spectrum.
    Simulate(SimulateArgs),
    /// Sweep the plate phase or tilt for one or more post-selection angles.
    Sweep(SweepArgs),
    /// Build a calibration curve of shift against plate phase.
    Calibrate(CalibrateArgs),
    /// Estimate the plate phase from a measured shift.
    Estimate(EstimateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Weighting {
    Exact,
    Proxy,
}

impl From<Weighting> for SpreadWeighting {
    fn from(w: Weighting) -> Self {
        match w {
            Weighting::Exact => SpreadWeighting::Exact,
            Weighting::Proxy => SpreadWeighting::Proxy,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// TOML config, or a manifest JSON from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source preset; replaces the config's source and dispersion.
    #[arg(long, value_enum)]
    source: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps and calibration (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, value_enum)]
    dispersion: Option<DispersionFlag>,
    /// Detector window.
    #[arg(long, value_enum)]
    window: Option<WindowFlag>,
    /// Polarizer angular spread Δ, rad.
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long, value_enum)]
    weighting: Option<Weighting>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            source: self.source,
            seed: self.seed,
            dispersion: self.dispersion,
            window: self.window,
            spread: self.spread,
            weighting: self.weighting.map(Into::into),
            ..Overrides::default()
        }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("plate").args(["alpha", "theta"])))]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Plate phase, rad.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Plate tilt, rad.
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Post-selection angle, rad.
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Report the signed shift (negative is a blueshift).
    #[arg(long)]
    signed: bool,
}

/// `lo:hi:n`, `n` evenly spaced values including both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|i| if i + 1 == self.n { self.hi } else { self.lo + i as f64 * step }).collect()
    }
}

fn parse_range(s: &str) -> Result<Range, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(format!("expected lo:hi:n, got `{s}`"));
    };
    let lo: f64 = lo.parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    let n: usize = n.parse().map_err(|_| format!("bad point count `{n}`"))?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo || (n > 1 && hi == lo) {
        return Err(format!("range `{s}` must have lo < hi (or n = 1) and n ≥ 1"));
    }
    Ok(Range { lo, hi, n })
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("axis").args(["alpha", "theta"]).required(true)))]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Post-selection angles, rad; one CSV is written per value.
    #[arg(long, required = true, num_args = 1.., allow_negative_numbers = true)]
    beta: Vec<f64>,
    /// Plate-phase range lo:hi:n, rad.
    #[arg(long, value_parser = parse_range)]
    alpha: Option<Range>,
    /// Tilt range lo:hi:n, rad.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    theta: Option<Range>,
    #[arg(long)]
    signed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Closed-form shift, ideal polarizers.
    Analytic,
    /// Simulated, ideal polarizers.
    Simulated,
    /// Simulated and averaged over the polarizer spread.
    Spread,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, value_enum, default_value = "analytic")]
    mode: Mode,
    /// Calibrated plate-phase nodes lo:hi:n, rad.
    #[arg(long, value_parser = parse_range, default_value = "0:0.013:121")]
    alpha: Range,
    /// Calibration CSV; the sidecar goes next to it with a `.json` extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").args(["delta_lambda", "spectrum"]).required(true)))]
struct EstimateArgs {
    /// Calibration CSV written by `calibrate`.
    #[arg(long)]
    calibration: PathBuf,
    /// Measured shift magnitude, nm.
    #[arg(long, allow_negative_numbers = true)]
    delta_lambda: Option<f64>,
    /// Measured spectrum CSV.
    #[arg(long, requires = "reference")]
    spectrum: Option<PathBuf>,
    /// Reference (zero-phase) spectrum CSV on the same grid.
    #[arg(long, requires = "spectrum")]
    reference: Option<PathBuf>,
    /// Standard deviation of the shift measurement, nm.
    #[arg(long, default_value_t = 0.0)]
    sigma_dl: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Defaults to the manifest's directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn init_logging(verbose: bool) {
    let level = if verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).format_target(false).init();
}

fn set_threads(threads: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("--threads: {e}")))?;
    }
    Ok(())
}

fn dispatch(command: Command, argv: &[String]) -> Result<(), Failure> {
    match command {
        Command::Simulate(a) => {
            set_threads(a.common.threads)?;
            let o = Overrides { alpha: a.alpha, theta: a.theta, beta: a.beta, ..a.common.overrides() };
            commands::simulate(&a.common, o, a.signed, argv)
        }
        Command::Sweep(a) => {
            set_threads(a.common.threads)?;
            let axis = match (a.alpha, a.theta) {
                (Some(r), _) => commands::Axis::Alpha(r),
                (None, Some(r)) => commands::Axis::Theta(r),
                (None, None) => unreachable!("clap requires one axis"),
            };
            commands::sweep(&a.common, &a.beta, axis, a.signed, argv)
        }
        Command::Calibrate(a) => {
            set_threads(a.common.threads)?;
            let o = Overrides { beta: a.beta, ..a.common.overrides() };
            commands::calibrate(&a.common, o, a.mode, a.alpha, a.out.as_deref(), argv)
        }
        Command::Estimate(a) => commands::estimate(&a, argv),
        Command::Replay(a) => replay(a),
    }
}

/// Re-parses the recorded command line with the manifest as its config.
fn replay(a: ReplayArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.manifest)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", a.manifest.display())))?;
    let m: manifest::Manifest =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", a.manifest.display())))?;
    let out_dir = a.out_dir.unwrap_or_else(|| a.manifest.parent().map(PathBuf::from).unwrap_or_default());
    let cli = Cli::try_parse_from(std::iter::once("weakphase".to_string()).chain(m.args.iter().cloned()))
        .map_err(|e| Failure::config(format!("manifest arguments do not parse: {e}")))?;
    let mut command = cli.command;
    let common = match &mut command {
        Command::Simulate(c) => Some(&mut c.common),
        Command::Sweep(c) => Some(&mut c.common),
        Command::Calibrate(c) => Some(&mut c.common),
        Command::Estimate(c) => {
            c.out_dir = out_dir.clone();
            None
        }
        Command::Replay(_) => return Err(Failure::config("a manifest cannot record a replay")),
    };
    if let Some(common) = common {
        if m.resolved_config.is_some() {
            common.config = Some(a.manifest.clone());
        }
        common.out_dir = out_dir;
        common.threads = a.threads;
    }
    dispatch(command, &m.args)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let argv = manifest::reproducible_args(&std::env::args().skip(1).collect::<Vec<_>>());
    match dispatch(cli.command, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
