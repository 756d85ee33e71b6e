use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsi_cli::config::{RunConfig, Seeds};
use dsi_cli::error::{CliError, CliResult};
use dsi_cli::pipeline::{self, Outcome};
use dsi_cli::plot;

#[derive(Parser)]
#[command(name = "dsi", version, about = "Data-space inversion for fault-stress forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "configs/desk_case1.json")]
    config: PathBuf,
    /// Recompute even when outputs are up to date.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Replace every configured seed with values derived from this one.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate prior realizations and the synthetic truth.
    GenPrior,
    /// Simulate every prior realization and the truth.
    Simulate,
    /// Fit normalization and train the parameterizer.
    Train,
    /// Place monitors, invert synthetic observations and summarize.
    RunDsi,
    /// Render figures from existing outputs.
    Plot,
    /// Every stage from priors to inversion, then plots.
    All,
    /// Check the configuration without running anything.
    Validate,
}

fn report(stage: &str, o: Outcome) {
    match o {
        Outcome::Ran => eprintln!("{stage}: done"),
        Outcome::UpToDate => eprintln!("{stage}: up to date"),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(s) = cli.seed_override {
        cfg.seeds = Seeds::overridden(s);
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Validation("--workers must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| {
        let f = cli.force;
        match cli.command {
            Command::Validate => {
                cfg.validate_inversion()?;
                eprintln!("{}: valid", cli.config.display());
            }
            Command::GenPrior => report("gen-prior", pipeline::cmd_gen_prior(&cfg, f)?),
            Command::Simulate => report("simulate", pipeline::cmd_simulate(&cfg, f)?),
            Command::Train => report("train", pipeline::cmd_train(&cfg, f)?),
            Command::RunDsi => report("run-dsi", pipeline::cmd_run_dsi(&cfg, f)?),
            Command::Plot => {
                let files = plot::cmd_plot(&cfg)?;
                eprintln!("plot: {} figure(s)", files.len());
            }
            Command::All => {
                report("gen-prior", pipeline::cmd_gen_prior(&cfg, f)?);
                report("simulate", pipeline::cmd_simulate(&cfg, f)?);
                report("train", pipeline::cmd_train(&cfg, f)?);
                report("run-dsi", pipeline::cmd_run_dsi(&cfg, f)?);
                let files = plot::cmd_plot(&cfg)?;
                eprintln!("plot: {} figure(s)", files.len());
            }
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage errors are validation errors; help and version are not errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
