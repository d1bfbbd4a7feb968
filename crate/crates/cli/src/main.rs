//! `viscoflow`: reproducible experiment harness writing CSV artifacts.

mod commands;
mod config;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use params::{FkParams, LandscapeParams, MomentsParams, PdeParams, SgdParams, ToynetParams};

#[derive(Parser, Debug)]
#[command(name = "viscoflow", version, about = "Noisy ResNet dynamics, Kolmogorov PDEs and loss landscapes")]
pub struct Cli {
    /// TOML file with one `[section]` per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (a directory for `toynet`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check mean and variance of each scheme's normalized increment.
    Moments(MomentsParams),
    /// Compare analytic, finite-difference and Monte Carlo u(x, 0).
    FkCheck(FkParams),
    /// Sweep J_eps(f) over an (eps, f) grid.
    Landscape(LandscapeParams),
    /// Run minibatch SGD on J_eps(f).
    Sgd(SgdParams),
    /// Solve the 1D Kolmogorov equation by finite differences.
    Pde(PdeParams),
    /// Train the toy residual network over several seeds.
    Toynet(ToynetParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Moments(_) => "moments",
            Command::FkCheck(_) => "fk-check",
            Command::Landscape(_) => "landscape",
            Command::Sgd(_) => "sgd",
            Command::Pde(_) => "pde",
            Command::Toynet(_) => "toynet",
        }
    }
}

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_CHECK: u8 = 3;

/// Failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<viscoflow_core::Error> for Failure {
    fn from(e: viscoflow_core::Error) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_CONFIG };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::config(format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("viscoflow: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
