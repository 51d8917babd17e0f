use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levelset::calibration::ErrorMetric;
use levelset_cli::commands::configure_threads;
use levelset_cli::{
    ClassFilter, CliError, Result, RunConfig, SimLevel, SimulateConfig, cmd_estimate, cmd_report, cmd_simulate,
};

#[derive(Parser)]
#[command(name = "levelset", version, about = "Density level-set estimation with r-convex hulls")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit, calibrate (or margin-split), estimate and write report.json,
    /// region.geojson and figure.svg
    Estimate(EstimateArgs),
    /// Run the convergence experiment on a shipped synthetic density
    Simulate(SimulateArgs),
    /// Print a summary table of a report.json
    Report { path: PathBuf },
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV of `x,y` or `x,y,label` rows
    input: Option<PathBuf>,
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    class: Option<ClassFilter>,
    /// Probability content: the level set holds mass 1 - tau
    #[arg(long)]
    tau: Option<f64>,
    /// Raw density threshold (margin split, no calibration)
    #[arg(long)]
    t: Option<f64>,
    /// Shrinkage of the estimated radius, in (0, 1]
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long = "B")]
    b: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long = "I")]
    i: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Odd neighbour counts, comma separated
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long = "J")]
    j: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resolution: Option<usize>,
    /// Skip calibration and split at the tau-quantile with a margin
    #[arg(long)]
    no_calibrate: bool,
    /// Margin constant M of D_n (default: smoothed-bootstrap estimate)
    #[arg(long)]
    margin_m: Option<f64>,
    /// Initial bisection bracket `rm,rM`
    #[arg(long, value_delimiter = ',', num_args = 1)]
    bracket: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Shipped density whose level set is the truth for d_mu and d_H
    #[arg(long)]
    truth_density: Option<String>,
    /// Truth as a PBM bitmap; needs --truth-bbox
    #[arg(long)]
    truth_pbm: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    truth_bbox: Option<Vec<f64>>,
    /// Record per-stage wall-clock times in the report
    #[arg(long)]
    timings: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MetricArg {
    Probability,
    Lebesgue,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "two-discs")]
    density: String,
    /// Sample sizes, comma separated
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,4000")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Threshold as a fraction of the peak density
    #[arg(long, default_value_t = 0.65)]
    t_frac: f64,
    /// Raw threshold (overrides --t-frac)
    #[arg(long)]
    t: Option<f64>,
    /// Probability content (overrides --t-frac)
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    #[arg(long = "J", default_value_t = 40)]
    j: usize,
    /// Raster side of the r0 grid oracle; 0 disables it
    #[arg(long, default_value_t = 512)]
    oracle_resolution: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn pair<const N: usize>(v: Vec<f64>, flag: &str) -> Result<[f64; N]> {
    v.try_into()
        .map_err(|v: Vec<f64>| CliError::Config(format!("--{flag} needs {N} comma-separated numbers, got {}", v.len())))
}

fn run_estimate(a: EstimateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if a.input.is_some() {
        cfg.input = a.input;
    }
    if let Some(c) = a.class {
        cfg.class = c;
    }
    if let Some(tau) = a.tau {
        cfg.tau = Some(tau);
        cfg.t = None;
    }
    if let Some(t) = a.t {
        cfg.t = Some(t);
        cfg.tau = None;
    }
    macro_rules! set {
        ($($field:ident <- $val:expr),*) => { $(if let Some(v) = $val { cfg.$field = v; })* };
    }
    set!(nu <- a.nu, b <- a.b, i <- a.i, j <- a.j, seed <- a.seed, resolution <- a.resolution, out <- a.out);
    if a.m.is_some() {
        cfg.m_mc = a.m;
    }
    if a.delta.is_some() {
        cfg.delta = a.delta;
    }
    if let Some(k) = a.k {
        cfg.k_grid = k;
    }
    cfg.no_calibrate |= a.no_calibrate;
    if a.margin_m.is_some() {
        cfg.margin_m = a.margin_m;
    }
    if let Some(b) = a.bracket {
        cfg.bracket = Some(pair(b, "bracket")?);
    }
    if let Some(m) = a.metric {
        cfg.metric = match m {
            MetricArg::Probability => ErrorMetric::Probability,
            MetricArg::Lebesgue => ErrorMetric::Lebesgue,
        };
    }
    if a.truth_density.is_some() {
        cfg.truth_density = a.truth_density;
    }
    if a.truth_pbm.is_some() {
        cfg.truth_pbm = a.truth_pbm;
    }
    if let Some(b) = a.truth_bbox {
        cfg.truth_bbox = Some(pair(b, "truth-bbox")?);
    }
    let out = cmd_estimate(&cfg, a.timings)?;
    out.write(&cfg.out)?;
    print!("{}", levelset_cli::report::format_report(&out.report));
    println!("wrote {}", cfg.out.display());
    Ok(())
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let level = match (a.t, a.tau) {
        (Some(_), Some(_)) => return Err(CliError::Config("give either --t or --tau, not both".into())),
        (Some(t), None) => SimLevel::Threshold(t),
        (None, Some(tau)) => SimLevel::Content(tau),
        (None, None) => SimLevel::PeakFraction(a.t_frac),
    };
    let cfg = SimulateConfig {
        density: a.density,
        n_grid: a.n,
        replicates: a.reps,
        level,
        nu: a.nu,
        seed: a.seed,
        resolution: a.resolution,
        j: a.j,
        oracle_resolution: (a.oracle_resolution > 0).then_some(a.oracle_resolution),
        out: a.out,
    };
    let out = cmd_simulate(&cfg)?;
    out.write(&cfg.out)?;
    print!("{}", out.summary());
    println!("wrote {}", cfg.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Estimate(a) => run_estimate(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Report { path } => cmd_report(&path).map(|s| print!("{s}")),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = e.hint() {
                eprintln!("hint: {h}");
            }
            ExitCode::FAILURE
        }
    }
}
