use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use star_alloc::harness::{self, AssignMethod, Experiment, ExperimentSpec, Scheme, SweepAxis};
use star_alloc::starface::SurfaceMode;
use star_alloc::sysmodel::SystemConfig;
use star_alloc::Error;

#[derive(Parser)]
#[command(name = "star-alloc", version, about = "STAR-RIS OMA/NOMA resource allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment and write its CSV.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// convergence, sumrate_vs_M, cdf_assignment, decoding_orders or amplitude_profile.
    #[arg(long)]
    experiment: String,
    #[arg(long, default_value = "noma")]
    scheme: String,
    #[arg(long, default_value = "lma")]
    assign: String,
    /// star or cr.
    #[arg(long, default_value = "star")]
    surface: String,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    /// Seed base; defaults to rng_seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    /// M, p_max or qos.
    #[arg(long, default_value = "M")]
    sweep_axis: String,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Gaussian randomization sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Append a wall_ms column.
    #[arg(long)]
    timing: bool,
}

enum Failure {
    Usage(String),
    Guard(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Precondition(_) => Failure::Usage(e.to_string()),
            Error::Guard(_) => Failure::Guard(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

fn build_spec(args: &RunArgs) -> Result<ExperimentSpec, Failure> {
    let usage = |e: Error| Failure::Usage(e.to_string());
    let experiment: Experiment = args.experiment.parse().map_err(usage)?;
    let mut config = match &args.config {
        Some(p) => SystemConfig::from_file(p).map_err(|e| match e {
            Error::Io(io) => Failure::Usage(format!("cannot read {}: {io}", p.display())),
            other => Failure::Usage(other.to_string()),
        })?,
        None => SystemConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        config.set(k.trim(), v.trim()).map_err(Failure::Usage)?;
    }
    if args.overrides.iter().any(|kv| kv.trim_start().starts_with("num_subchannels"))
        && !args.overrides.iter().any(|kv| kv.trim_start().starts_with("num_users")) {
            config.num_users = 2 * config.num_subchannels;
        }
    config.validate().map_err(usage)?;
    let mut spec = ExperimentSpec::new(experiment, config);
    spec.scheme = args.scheme.parse::<Scheme>().map_err(usage)?;
    spec.assign = args.assign.parse::<AssignMethod>().map_err(usage)?;
    spec.surface = args.surface.parse::<SurfaceMode>().map_err(usage)?;
    spec.sweep_axis = args.sweep_axis.parse::<SweepAxis>().map_err(usage)?;
    if let Some(s) = &args.sweep {
        spec.sweep = s.clone();
    }
    spec.trials = args.trials;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    spec.pipeline.samples = args.samples;
    spec.timing = args.timing;
    Ok(spec)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let spec = build_spec(&args)?;
    let data = harness::run_experiment(&spec)?;
    match &args.out {
        Some(p) => std::fs::write(p, &data.csv).map_err(|e| Failure::Other(format!("{}: {e}", p.display())))?,
        None => print!("{}", data.csv),
    }
    let feasible = data.records.iter().filter(|r| r.feasible).count();
    eprintln!("{feasible}/{} trial runs feasible", data.records.len());
    if feasible == 0 {
        return Err(Failure::Guard("every trial was infeasible".into()));
    }
    Ok(())
}

fn configure_threads() {
    if let Ok(v) = std::env::var("STAR_ALLOC_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("ignoring STAR_ALLOC_THREADS={v:?}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    configure_threads();
    let Command::Run(args) = cli.command;
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Guard(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
