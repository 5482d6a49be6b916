use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ewkit::config::{Algorithm, ExperimentConfig};
use ewkit::error::{config_err, HarnessError, Result};
use ewkit::sweep::{sweep, sweep_table};
use ewkit::verify::{run_suite, Suite};
use ewkit::{run_experiment, Experiment};

/// Exponential-weights experiments with runtime regret-bound checks.
#[derive(Parser)]
#[command(name = "ewkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment. Any config key can be overridden as `--key value`.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        algo: Option<Algorithm>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
    /// Run the acceptance criteria.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Run one experiment per value of a single parameter.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        algo: Option<Algorithm>,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: Option<&PathBuf>, algo: Option<Algorithm>) -> Result<ExperimentConfig> {
    let mut c = match config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::for_algorithm(algo.unwrap_or(Algorithm::Gd)),
    };
    if let Some(a) = algo {
        c.set("algo", a.id())?;
    }
    Ok(c)
}

/// `--key value` and `--key=value` pairs.
fn apply_overrides(c: &mut ExperimentConfig, args: &[String]) -> Result<()> {
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| config_err(format!("unexpected argument `{arg}`")))?;
        match key.split_once('=') {
            Some((k, v)) => c.set(k, v)?,
            None => {
                let value = it.next().ok_or_else(|| config_err(format!("missing value for `--{key}`")))?;
                c.set(key, value)?;
            }
        }
    }
    Ok(())
}

fn report(e: &Experiment) -> Result<()> {
    print!("{}", e.summary_text());
    let failures = e.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Violation(failures.join("; ")))
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            algo,
            seed,
            out,
            overrides,
        } => {
            let mut c = load(config.as_ref(), algo)?;
            apply_overrides(&mut c, &overrides)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if out.is_some() {
                c.out = out;
            }
            report(&run_experiment(&c)?)
        }
        Command::Verify { suite } => {
            let reports = run_suite(suite.parse::<Suite>()?);
            for r in &reports {
                println!("{r}");
            }
            let failed: Vec<String> = reports.iter().filter(|r| !r.passed()).map(|r| r.id.to_string()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(HarnessError::Violation(format!("criteria {} failed", failed.join(", "))))
            }
        }
        Command::Sweep {
            config,
            algo,
            param,
            values,
            out,
        } => {
            let mut c = load(config.as_ref(), algo)?;
            if out.is_some() {
                c.out = out;
            }
            let rows = sweep(&c, &param, &values)?;
            print!("{}", sweep_table(&param, &rows));
            let param = &param;
            let failures: Vec<String> = rows
                .iter()
                .flat_map(|(v, e)| e.failures().into_iter().map(move |f| format!("{param}={v}: {f}")))
                .collect();
            if failures.is_empty() {
                Ok(())
            } else {
                Err(HarnessError::Violation(failures.join("; ")))
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
