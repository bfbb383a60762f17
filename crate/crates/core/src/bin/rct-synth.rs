//! Command-line entry point: simulation experiments, single synthetic
//! datasets, scenario export and a demonstration cohort.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rct_synth::cohort::{simulate_cohort, CohortOptions};
use rct_synth::frameworks::{generate, FrameworkKind};
use rct_synth::harness::{run_experiment_with, write_outputs, ExperimentConfig};
use rct_synth::missingness::{impose, registry_toml};
use rct_synth::rng::{seeded, stream};
use rct_synth::Result;

#[derive(Parser)]
#[command(name = "rct-synth", version, about = "Sequential synthetic data for trials with missing data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation experiment and write its result files.
    Run {
        /// Experiment config (TOML); built-in defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated scenario ids.
        #[arg(long, value_delimiter = ',')]
        scenarios: Option<Vec<String>>,
        /// Comma-separated framework names.
        #[arg(long, value_delimiter = ',')]
        frameworks: Option<Vec<FrameworkKind>>,
    },
    /// Fit one framework and write one synthetic table.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        framework: FrameworkKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Impose this scenario on the complete rows first; otherwise the
        /// dataset is used with its own missing values.
        #[arg(long)]
        scenario: Option<String>,
        /// Complete synthetic table.
        #[arg(long)]
        out: PathBuf,
        /// Synthetic table with generated missingness, for frameworks that
        /// draw it.
        #[arg(long)]
        observed_out: Option<PathBuf>,
    },
    /// Scenario registry operations.
    Scenarios {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Write the simulated stand-in cohort as CSV.
    DemoData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = CohortOptions::default().n)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Write the built-in scenarios as TOML.
    Export {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            runs,
            workers,
            seed,
            scenarios,
            frameworks,
        } => {
            let mut c = load_config(config.as_deref())?;
            if let Some(r) = runs {
                c.n_runs = r;
            }
            if workers.is_some() {
                c.workers = workers;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(s) = scenarios {
                c.scenarios = s;
            }
            if let Some(f) = frameworks {
                c.frameworks = f;
            }
            let step = |done: usize, total: usize| {
                if done == total || done % (total / 10).max(1) == 0 {
                    eprintln!("{done}/{total} tasks");
                }
            };
            let result = run_experiment_with(&c, &step)?;
            write_outputs(&result, &out)?;
            eprintln!(
                "{} records, {} failed, {:.1} s; results in {}",
                result.records.len(),
                result.failures(),
                result.elapsed_seconds,
                out.display()
            );
        }
        Command::Generate {
            config,
            framework,
            seed,
            scenario,
            out,
            observed_out,
        } => {
            let c = load_config(config.as_deref())?;
            let data = c.dataset.load()?;
            let real = match scenario {
                Some(id) => {
                    let reg = c.scenario_registry()?;
                    let spec = reg
                        .get(&id)
                        .ok_or_else(|| rct_synth::Error::Config(format!("unknown scenario `{id}`")))?;
                    impose(&data.table, spec, &mut stream(seed, "impose", 0))?.table
                }
                None => data.raw,
            };
            let output = generate(framework, &real, &c.generation, &mut stream(seed, "generate", 0))?;
            output.complete.save_csv(&out, "NA")?;
            if let (Some(path), Some(t)) = (observed_out, &output.with_missingness) {
                t.save_csv(path, "NA")?;
            }
            let d = &output.diagnostics;
            eprintln!(
                "{} rows; max weight {:.3}; {} unconverged fits; {} empty admissible sets",
                output.complete.n_rows(),
                d.max_weight(),
                d.unconverged(),
                d.empty_admissible
            );
        }
        Command::Scenarios {
            action: ScenarioAction::Export { out },
        } => std::fs::write(out, registry_toml())?,
        Command::DemoData { out, n, seed } => {
            let options = CohortOptions {
                n,
                ..Default::default()
            };
            simulate_cohort(&options, &mut seeded(seed))?.save_csv(out, "NA")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
