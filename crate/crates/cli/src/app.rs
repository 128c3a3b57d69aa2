use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use locc_core::protocol::SimulationMode;
use locc_core::{EPS_NORM, EPS_RANK};

use crate::commands::{self, Output, Settings};
use crate::error::CliError;
use crate::format::LoadOptions;

#[derive(Parser, Debug)]
#[command(name = "locc", version, about = "Multipartite pure-state entanglement analysis and exact LOCC protocol synthesis")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct GlobalArgs {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Branch enumeration or one sampled branch (command-specific default).
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// Threshold on the Schmidt tail for calling a cut entangled.
    #[arg(long, global = true, default_value_t = EPS_RANK)]
    pub tol_rank: f64,
    /// Allowed deviation of an input state's norm from one.
    #[arg(long, global = true, default_value_t = EPS_NORM)]
    pub tol_norm: f64,
    /// Rescale input states instead of rejecting non-unit norms.
    #[arg(long, global = true)]
    pub renormalize: bool,
    /// Worker threads for trial loops (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Enumerate,
    Sample,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Schmidt data for every cut and the genuine-entanglement verdict.
    Analyze {
        #[arg(long)]
        state: PathBuf,
    },
    /// Randomized checks of the product-direction claims.
    Claims {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Extract a two-party pure entangled state across a cut.
    Extract {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        cut: String,
    },
    /// Exact bipartite conversion to the given Schmidt coefficients.
    Convert {
        #[arg(long)]
        source: PathBuf,
        /// Comma-separated squared Schmidt coefficients, e.g. "0.7,0.3".
        #[arg(long)]
        target_schmidt: String,
        #[arg(long)]
        cut: String,
    },
    /// Build and verify a protocol turning copies of the source into the target.
    Transform {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 64)]
        max_copies: usize,
        /// Write the final-stage trace here instead of stdout.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Best rate lower bound over independently seeded trials.
    Rate {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 8)]
        trials: usize,
        #[arg(long, default_value_t = 64)]
        max_copies: usize,
    },
}

impl GlobalArgs {
    fn settings(&self) -> Settings {
        Settings {
            seed: self.seed,
            mode: self.mode.map(|m| match m {
                Mode::Enumerate => SimulationMode::Enumerate,
                Mode::Sample => SimulationMode::Sample,
            }),
            load: LoadOptions { renormalize: self.renormalize, tol_norm: self.tol_norm },
            tol_rank: self.tol_rank,
            threads: self.threads,
        }
    }
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let s = cli.global.settings();
    match &cli.command {
        Command::Analyze { state } => commands::analyze(state, &s),
        Command::Claims { trials } => commands::claims(*trials, &s),
        Command::Extract { state, cut } => commands::extract(state, cut, &s),
        Command::Convert { source, target_schmidt, cut } => commands::convert(source, target_schmidt, cut, &s),
        Command::Transform { source, target, max_copies, trace_out } => commands::transform(source, target, *max_copies, &s, trace_out.as_deref()),
        Command::Rate { source, target, trials, max_copies } => commands::rate(source, target, *trials, *max_copies, &s),
    }
}
