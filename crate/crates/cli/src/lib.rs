//! Command-line front end for `cmseq`.
//!
//! Exit codes: 0 on success, 2 when an input fails validation or a
//! computation fails, 64 on usage errors. Failures print
//! `{"error": <kind>, "message": <text>}` on standard error.

pub mod commands;
pub mod model_file;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cmseq::tolerance;

pub const EXIT_FAILURE: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure { kind: &'static str, message: String },
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Failure {
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<cmseq::Error> for CliError {
    fn from(e: cmseq::Error) -> Self {
        CliError::Failure {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundaryChoice {
    /// Endpoint law of the Markov model itself.
    Markov,
    /// Markov endpoint marginals with zero cross-covariance.
    Independent,
    /// Read from --boundary-file.
    File,
}

/// Conditioning endpoint for a decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    First,
    Last,
}

fn parse_conditioning(s: &str) -> Result<Conditioning, String> {
    match s {
        "0" => Ok(Conditioning::First),
        "N" | "n" => Ok(Conditioning::Last),
        _ => Err(format!("expected 0 or N, got {s:?}")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "cmseq", version, about = "Gaussian Markov, CM and reciprocal sequence toolkit")]
pub struct Cli {
    /// Human-readable summary on standard error.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Induce a reciprocal CM_L model from a Markov model file.
    Induce {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "markov")]
        boundary: BoundaryChoice,
        #[arg(long, required_if_eq("boundary", "file"))]
        boundary_file: Option<PathBuf>,
    },
    /// Report the precision-matrix patterns of a model or covariance file.
    Classify {
        input: PathBuf,
        #[arg(long, default_value_t = tolerance::STRUCTURE)]
        tol: f64,
    },
    /// Check the reciprocal and Markov conditions of a CM model file.
    Verify {
        input: PathBuf,
        #[arg(long, default_value_t = tolerance::ALGEBRAIC)]
        tol: f64,
    },
    /// Draw sequences from a model file as CSV.
    Sample {
        input: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a CM covariance into a Markov residual and an endpoint term.
    Decompose {
        input: PathBuf,
        #[arg(long = "c", value_parser = parse_conditioning)]
        c: Conditioning,
        #[arg(long, default_value_t = tolerance::STRUCTURE)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample constant-velocity trajectories pinned to an origin and destination law.
    DemoNcv {
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long)]
        origin_file: PathBuf,
        #[arg(long)]
        dest_file: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let v = cli.verbose;
    match cli.command {
        Command::Induce {
            input,
            out,
            boundary,
            boundary_file,
        } => commands::induce(&input, out.as_deref(), boundary, boundary_file.as_deref(), v),
        Command::Classify { input, tol } => commands::classify_cmd(&input, tol, v),
        Command::Verify { input, tol } => commands::verify(&input, tol, v),
        Command::Sample { input, count, seed, out } => commands::sample_cmd(&input, count, seed, out.as_deref(), v),
        Command::Decompose { input, c, tol, out } => commands::decompose(&input, c, tol, out.as_deref(), v),
        Command::DemoNcv {
            dt,
            q,
            steps,
            origin_file,
            dest_file,
            count,
            seed,
            out,
        } => commands::demo_ncv(
            &commands::NcvArgs {
                dt,
                q,
                steps,
                origin_file,
                dest_file,
                count,
                seed,
                out,
            },
            v,
        ),
    }
}

/// Parse `args`, run, and map the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Failure { kind, message }) => {
            eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
