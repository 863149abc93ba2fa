use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbrw_cli::commands::{cmd_classify, cmd_simulate, cmd_tail, cmd_verify, GridKind, GridSpec, SimParams};
use cbrw_cli::{CliError, ModelConfig};

#[derive(Parser)]
#[command(name = "cbrw", version, about = "Maximal displacement of catalytic branching random walks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, allow_negative_numbers = true)]
    x_from: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    x_to: Option<i64>,
    #[arg(long, value_enum, default_value_t = GridKind::Lin)]
    grid: GridKind,
    #[arg(long)]
    points: Option<usize>,
}

impl GridArgs {
    fn spec(&self, default_from: i64) -> Result<Option<GridSpec>, CliError> {
        match (self.x_from, self.x_to) {
            (None, None) => Ok(None),
            (from, Some(to)) => Ok(Some(GridSpec {
                from: from.unwrap_or(default_from),
                to,
                kind: self.grid,
                points: self.points,
            })),
            (Some(_), None) => Err(CliError::Config("--x-from needs --x-to".into())),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Perron root of the criticality matrix and the regime label.
    Classify {
        #[command(flatten)]
        common: Common,
    },
    /// Tail P_z(M > x) from the fixed-point solver.
    Tail {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Monte Carlo estimates of the tail.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated levels; alternative to --x-from/--x-to.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Vec<i64>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Work split only; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        streams: usize,
        #[arg(long, default_value_t = 1_000_000)]
        max_population: u64,
    },
    /// Compare solver tails with an asymptotic law.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        theorem: u8,
        #[command(flatten)]
        grid: GridArgs,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, result) = match &cli.command {
        Command::Classify { common } => (common, cmd_classify(&ModelConfig::load(&common.config)?)),
        Command::Tail { common, grid } => {
            let cfg = ModelConfig::load(&common.config)?;
            let spec = grid
                .spec(cfg.start)?
                .ok_or_else(|| CliError::Config("tail needs --x-to".into()))?;
            (common, cmd_tail(&cfg, &spec))
        }
        Command::Simulate {
            common,
            x,
            grid,
            trials,
            seed,
            streams,
            max_population,
        } => {
            let cfg = ModelConfig::load(&common.config)?;
            let mut levels = x.clone();
            if let Some(spec) = grid.spec(cfg.start)? {
                levels.extend(spec.levels()?);
            }
            let sim = SimParams {
                trials: *trials,
                seed: *seed,
                streams: *streams,
                max_population: *max_population,
            };
            (common, cmd_simulate(&cfg, &levels, &sim))
        }
        Command::Verify { common, theorem, grid } => {
            let cfg = ModelConfig::load(&common.config)?;
            let spec = grid.spec(cfg.start)?;
            (common, cmd_verify(&cfg, *theorem, spec.as_ref()))
        }
    };
    match result {
        Ok(text) => emit(common.out.as_deref(), &text),
        Err(CliError::VerificationFailed(text)) => {
            emit(common.out.as_deref(), &text)?;
            Err(CliError::VerificationFailed(text))
        }
        Err(e) => Err(e),
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CBRW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("CBRW_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cbrw: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
