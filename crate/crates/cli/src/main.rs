#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;
mod report;
mod svg;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lamelab_core::LabError;

use config::ExperimentConfig;
use experiments::Context;

#[derive(Debug)]
pub enum Failure {
    /// Unreadable, malformed or inconsistent configuration.
    Config(String),
    /// Solver breakdown, overflow, non-finite values.
    Numerical(String),
    /// A mathematical property the run relies on does not hold.
    Property(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Io(_) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Property(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Property(m) => write!(f, "property failure: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        let m = e.to_string();
        match e {
            LabError::InvalidInput(_) | LabError::OutOfRange { .. } => Self::Config(m),
            LabError::NonFinite { .. }
            | LabError::WeightOverflow { .. }
            | LabError::Singularity(_)
            | LabError::NotConverged { .. } => Self::Numerical(m),
            LabError::Ellipticity(_) | LabError::Precondition(_) | LabError::Degenerate(_) => Self::Property(m),
            LabError::Io(_) | LabError::Json(_) => Self::Io(m),
        }
    }
}

#[derive(Parser)]
#[command(name = "lamelab", version, about = "Unique continuation experiments for the Lamé system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check ellipticity of the moduli and derivative consistency of a field.
    EllipticityCheck(RunArgs),
    /// Residuals of the factorized principal operator on random polynomials.
    FactorizationCheck(RunArgs),
    /// Both sides of the Carleman inequality over a list of tau.
    CarlemanScan(RunArgs),
    /// Three-spheres masses, sigma_star and the C(sigma) curve.
    ThreeSpheres(RunArgs),
    /// Propagation-of-smallness plan and its decay limit.
    IterationPlan(RunArgs),
    /// Ball masses about a point and their vanishing order.
    Vanishing(RunArgs),
    /// Regularized Cauchy problem under shrinking data noise.
    CauchyStability(RunArgs),
    /// Grid refinement study for the Dirichlet solver.
    SolverConvergence(RunArgs),
    /// Print the JSON schema of the configuration files.
    Schema,
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: the config's "out", else lamelab-out/<experiment>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed given in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress on stderr.
    #[arg(long)]
    quiet: bool,
}

fn load(path: &PathBuf) -> Result<(Vec<u8>, ExperimentConfig), Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let cfg = serde_json::from_slice(&bytes).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok((bytes, cfg))
}

fn execute(subcommand: &str, args: &RunArgs) -> Result<(), Failure> {
    let (bytes, cfg) = load(&args.config)?;
    if cfg.name() != subcommand {
        return Err(Failure::Config(format!(
            "the configuration describes \"{}\", not \"{subcommand}\"",
            cfg.name()
        )));
    }
    let ctx = Context {
        seed: args.seed,
        quiet: args.quiet,
    };
    let outputs = experiments::run(&cfg, &ctx)?;
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.out().cloned())
        .unwrap_or_else(|| PathBuf::from("lamelab-out").join(subcommand));
    report::write_all(&dir, subcommand, &bytes, args.seed.or(cfg.seed()), &outputs)?;
    if !args.quiet {
        eprintln!("wrote {} files to {}", outputs.files.len() + 1, dir.display());
    }
    if outputs.violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(outputs.violations.join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Schema => {
            println!("{}", serde_json::to_string_pretty(&config::schema()).expect("schema serializes"));
            return ExitCode::SUCCESS;
        }
        Command::EllipticityCheck(a) => ("ellipticity-check", a),
        Command::FactorizationCheck(a) => ("factorization-check", a),
        Command::CarlemanScan(a) => ("carleman-scan", a),
        Command::ThreeSpheres(a) => ("three-spheres", a),
        Command::IterationPlan(a) => ("iteration-plan", a),
        Command::Vanishing(a) => ("vanishing", a),
        Command::CauchyStability(a) => ("cauchy-stability", a),
        Command::SolverConvergence(a) => ("solver-convergence", a),
    };
    match execute(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lamelab {name}: {f}");
            ExitCode::from(f.code())
        }
    }
}
