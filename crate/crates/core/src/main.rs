use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use onebit_lowrank::error::{Error, Result};
use onebit_lowrank::harness::{
    bound_diagnostic, load_config, run_sweep, run_trial, tessellation_probe, ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "onebit-lowrank",
    about = "Low-rank matrix recovery from dithered one-bit measurements",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads (affects speed only, never output). 0 = all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full oversampling sweep and write detail + summary CSV.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Output CSV path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report measured wall time in runtime_ms. Off by default so the
        /// CSV is byte-reproducible.
        #[arg(long)]
        timing: bool,
    },
    /// Run a single seeded trial and print the result as JSON.
    Trial {
        #[command(flatten)]
        common: CommonArgs,
        /// Oversampling factor (must not be needed if the grid has one entry).
        #[arg(long)]
        lambda: Option<f64>,
        /// Trial index.
        #[arg(long, default_value_t = 0)]
        trial_index: u64,
    },
    /// Hyperplane tessellation probe across a measurement-count grid.
    Probe {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated increasing measurement counts.
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Densely traced convergence-bound diagnostic for one trial.
    Bound {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 0)]
        trial_index: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn apply_overrides(mut cfg: ExperimentConfig, common: &CommonArgs) -> ExperimentConfig {
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    cfg
}

fn pick_lambda(cfg: &ExperimentConfig, lambda: Option<f64>) -> Result<f64> {
    match lambda {
        Some(l) => Ok(l),
        None if cfg.lambda_grid.len() == 1 => Ok(cfg.lambda_grid[0]),
        None => Err(Error::Config(
            "--lambda required when the config grid has several entries".into(),
        )),
    }
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::Io {
                context: format!("creating {}", p.display()),
                source: e,
            })?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(f)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep {
            common,
            out,
            timing,
        } => {
            let cfg = apply_overrides(load_config(&common.config)?, &common);
            cfg.validate()?;
            let buf = in_pool(common.threads, move || {
                let mut buf = Vec::new();
                run_sweep(&cfg, &mut buf, timing)?;
                Ok(buf)
            })?;
            let mut w = open_out(&out)?;
            w.write_all(&buf).and_then(|()| w.flush()).map_err(|e| Error::Io {
                context: "writing sweep CSV".into(),
                source: e,
            })
        }
        Command::Trial {
            common,
            lambda,
            trial_index,
        } => {
            let cfg = apply_overrides(load_config(&common.config)?, &common);
            cfg.validate()?;
            let lam = pick_lambda(&cfg, lambda)?;
            let result = in_pool(common.threads, || run_trial(&cfg, lam, trial_index))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&result)
                    .map_err(|e| Error::Config(format!("serializing result: {e}")))?
            );
            Ok(())
        }
        Command::Probe {
            common,
            n_grid,
            out,
        } => {
            let cfg = apply_overrides(load_config(&common.config)?, &common);
            cfg.validate()?;
            let report = in_pool(common.threads, || {
                tessellation_probe(
                    cfg.n1,
                    cfg.n2,
                    cfg.rank,
                    &n_grid,
                    cfg.trials,
                    cfg.master_seed,
                    &cfg.solver,
                )
            })?;
            let mut w = open_out(&out)?;
            report.write_csv(&mut w)?;
            w.flush().map_err(|e| Error::Io {
                context: "flushing probe CSV".into(),
                source: e,
            })
        }
        Command::Bound {
            common,
            lambda,
            trial_index,
            out,
        } => {
            let cfg = apply_overrides(load_config(&common.config)?, &common);
            cfg.validate()?;
            let lam = pick_lambda(&cfg, lambda)?;
            let report = in_pool(common.threads, || bound_diagnostic(&cfg, lam, trial_index))?;
            let mut w = open_out(&out)?;
            writeln!(
                w,
                "# lambda={} n={} trial={} kappa_v={} e0={} non_expansive_ok={}",
                report.lambda, report.n, report.trial, report.kappa_v, report.e0,
                report.non_expansive_ok
            )
            .map_err(|e| Error::Io {
                context: "writing bound header".into(),
                source: e,
            })?;
            report.write_csv(&mut w)?;
            w.flush().map_err(|e| Error::Io {
                context: "flushing bound CSV".into(),
                source: e,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
