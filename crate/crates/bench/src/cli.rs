//! Command-line driver.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{illcond_preset, stiff_preset, table2_preset, Example, ScenarioConfig};
use crate::error::{HarnessError, Result};
use crate::output::{emit_csv, render_table};
use crate::scenario::run_scenario;
use crate::selftest;

/// Worker-thread count used when `--threads` is absent.
pub const THREADS_ENV: &str = "CDFILTER_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cdfilter", version, about = "Continuous-discrete filter benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the file's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the file's Monte Carlo count.
        #[arg(long)]
        runs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Tracking accuracy and timing for sampling periods 2 to 12 s.
    Table2 {
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Accuracy as the measurement scheme approaches singularity.
    Illcond {
        #[arg(long, value_enum)]
        example: IllExample,
        #[arg(long, default_value_t = 1e-13)]
        delta_min: f64,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Van der Pol accuracy for stiffness 1 to 1e4.
    Stiff {
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Order, identity and exactness checks of the numerical kernels.
    Selftest,
}

#[derive(Debug, Args)]
struct Common {
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the environment variable, then all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IllExample {
    Tracking,
    Cstr,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                HarnessError::config(THREADS_ENV, format!("expected a positive integer, got `{v}`"))
            })?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(HarnessError::config("threads", "must be at least 1"));
    }
    Ok(n)
}

fn execute(cfg: &ScenarioConfig, common: &Common) -> Result<()> {
    cfg.validate()?;
    let threads = thread_count(common.threads)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Runtime(format!("cannot start worker pool: {e}")))?;
    let records = pool.install(|| run_scenario(cfg))?;
    println!("{} ({} runs, seed {})", cfg.name, cfg.monte_carlo, cfg.seed);
    print!("{}", render_table(&records));
    if let Some(path) = &common.out {
        emit_csv(&records, path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn load(path: &Path, seed: Option<u64>, runs: Option<usize>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = runs {
        cfg.monte_carlo = r;
    }
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            seed,
            runs,
            common,
        } => execute(&load(&config, seed, runs)?, &common),
        Command::Table2 { runs, seed, common } => execute(&table2_preset(runs, seed), &common),
        Command::Illcond {
            example,
            delta_min,
            runs,
            seed,
            common,
        } => {
            if !(delta_min > 0.0 && delta_min <= 0.1) {
                return Err(HarnessError::config("delta-min", "must lie in (0, 0.1]"));
            }
            let example = match example {
                IllExample::Tracking => Example::Tracking,
                IllExample::Cstr => Example::Cstr,
            };
            execute(&illcond_preset(example, delta_min, runs, seed)?, &common)
        }
        Command::Stiff { runs, seed, common } => execute(&stiff_preset(runs, seed), &common),
        Command::Selftest => {
            let (text, ok) = selftest::summary()?;
            print!("{text}");
            if ok {
                Ok(())
            } else {
                Err(HarnessError::Runtime("self-test failed".into()))
            }
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code: 0 on success, 1 for usage or config errors, 2 for runtime failures.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
