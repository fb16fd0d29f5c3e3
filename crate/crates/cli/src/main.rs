use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;

/// Bad arguments or input files (exit code 1).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A check ran to completion and did not pass (exit code 2).
#[derive(Debug)]
pub struct Failed(pub String);

impl fmt::Display for Failed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Failed {}

#[derive(Parser, Debug)]
#[command(
    name = "contact-kit",
    version,
    about = "Find and classify contact points of slow-fast systems"
)]
pub struct Cli {
    /// File of `key = value` lines supplying defaults for long options.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write here instead of stdout.
    #[arg(long, short, global = true, value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Built-in model (see `models`).
    #[arg(long, short)]
    pub model: Option<String>,
    /// Mitotic face, e.g. `X=1`.
    #[arg(long)]
    pub face: Option<String>,
    /// Parameter override, repeatable.
    #[arg(long = "param", short = 'p', value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// TOML model definition instead of a built-in.
    #[arg(long, value_name = "FILE")]
    pub model_file: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TolArgs {
    #[arg(long)]
    pub zero_abs: Option<f64>,
    #[arg(long)]
    pub zero_rel: Option<f64>,
    #[arg(long)]
    pub rank_abs: Option<f64>,
    #[arg(long)]
    pub rank_rel: Option<f64>,
    #[arg(long)]
    pub manifold_dist: Option<f64>,
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Off-manifold points this close to f = 0 are projected first.
    #[arg(long)]
    pub projection_radius: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OdeArgs {
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub max_step: Option<f64>,
    /// Time interval `T0,T1`.
    #[arg(long, allow_hyphen_values = true, value_name = "T0,T1")]
    pub t_span: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Classify one point.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        tol: TolArgs,
        #[arg(long, allow_hyphen_values = true, value_name = "X,Y,...")]
        point: Option<String>,
    },
    /// Classify a grid of points, or trace the contact curve through a seed.
    Scan {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        tol: TolArgs,
        /// One `MIN:MAX:COUNT` per variable, in order.
        #[arg(long, allow_hyphen_values = true, value_name = "MIN:MAX:COUNT")]
        grid: Vec<String>,
        /// Project grid points onto f = 0 before classifying.
        #[arg(long)]
        project: bool,
        /// Continuation mode; needs --point.
        #[arg(long, conflicts_with = "grid")]
        branch: bool,
        #[arg(long, allow_hyphen_values = true, value_name = "X,Y,...")]
        point: Option<String>,
        /// Hold one variable fixed while locating the start, e.g. `z=0.2`.
        #[arg(long, allow_hyphen_values = true, value_name = "VAR=VALUE")]
        pin: Option<String>,
        /// Trace in both directions.
        #[arg(long)]
        both: bool,
        #[arg(long)]
        max_points: Option<usize>,
    },
    /// Layer-problem fibers through seed points.
    Fibers {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        ode: OdeArgs,
        /// Seed point, repeatable.
        #[arg(long, allow_hyphen_values = true, value_name = "X,Y,...")]
        point: Vec<String>,
        /// Seed grid, one `MIN:MAX:COUNT` per variable.
        #[arg(long, allow_hyphen_values = true, value_name = "MIN:MAX:COUNT")]
        grid: Vec<String>,
    },
    /// Integrate the full system.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        ode: OdeArgs,
        #[arg(long, allow_hyphen_values = true, value_name = "X,Y,...")]
        point: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        /// Keep every STRIDE-th accepted step (the last is always kept).
        #[arg(long)]
        stride: Option<usize>,
    },
    /// List built-in models, parameters and known answers.
    Models,
    /// Cross-check analytic derivatives and known answers for one model.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        tol: TolArgs,
        /// Random sample points for the derivative check.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    if let Some(e) = err.downcast_ref::<contactkit::Error>() {
        use contactkit::Error::*;
        return match e {
            UnknownModel(_)
            | Parameter { .. }
            | ModelDefinition(_)
            | Dimension(_)
            | Unsupported(_) => 1,
            _ => 2,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 1;
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
