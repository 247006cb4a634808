//! `ddgsim`: run, validate and inspect simulation scenarios.
//!
//! Exit status is 0 on success, 1 when a run fails (for example a Newton
//! step that does not converge; partial logs are kept) and 2 for invalid
//! input.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ddgsim::scenario::{bundled, bundled_config, load_config, ScenarioConfig};
use ddgsim::SimError;

#[derive(Parser)]
#[command(name = "ddgsim", version, about = "Simulate elastic rods, shells and rod-shell structures")]
struct Cli {
    /// Worker threads for force assembly (1 gives bitwise reproducible runs).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    config: Option<PathBuf>,

    /// Name of a bundled scenario (see `list-scenarios`).
    #[arg(long)]
    scenario: Option<String>,

    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override `output.log_interval`.
    #[arg(long)]
    log_interval: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its logs.
    Run {
        #[command(flatten)]
        source: Source,

        /// Output directory (default: `output.dir`, else `output/<name>`).
        #[arg(long)]
        out_dir: Option<PathBuf>,

        /// Build everything and stop before the first step.
        #[arg(long)]
        dry_run: bool,
    },
    /// Check a scenario without stepping it.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Print the names of the bundled scenarios.
    ListScenarios,
    /// Print a scenario with every default filled in.
    ResolveConfig {
        #[command(flatten)]
        source: Source,
    },
}

impl Source {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.config, &self.scenario) {
            (Some(p), _) => load_config(p)?,
            (None, Some(name)) => bundled_config(name)?,
            (None, None) => bail!("give --config or --scenario"),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.log_interval {
            cfg.output.log_interval = n;
        }
        cfg.check()?;
        Ok(cfg)
    }
}

fn validate(cfg: &ScenarioConfig) -> Result<()> {
    let inst = cfg.instantiate().with_context(|| format!("scenario '{}'", cfg.name))?;
    let r = &inst.sim.robot;
    println!(
        "{}: ok ({} nodes, {} DOFs, {} steps of {} s)",
        cfg.name,
        r.n_nodes(),
        r.total_dofs(),
        cfg.sim.n_steps(),
        cfg.sim.dt
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match cli.command {
        Command::ListScenarios => {
            for b in bundled() {
                let cfg = b.config()?;
                let tag = if cfg.experimental { " [experimental]" } else { "" };
                println!("{:<18} {}{tag}", b.name, cfg.description);
            }
        }
        Command::ResolveConfig { source } => print!("{}", source.load()?.to_toml()?),
        Command::Validate { source } => validate(&source.load()?)?,
        Command::Run {
            source,
            out_dir,
            dry_run,
        } => {
            let cfg = source.load()?;
            if dry_run {
                return validate(&cfg);
            }
            let dir = out_dir
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| PathBuf::from("output").join(&cfg.name));
            let mut inst = cfg.instantiate()?;
            log::info!("running '{}' into {}", cfg.name, dir.display());
            let s = inst.run_to_dir(&dir)?;
            println!(
                "{}: {} steps, {} frames, t = {} s, {:.2} s wall -> {}",
                s.name,
                s.steps,
                s.frames,
                s.final_time,
                s.wall_seconds,
                dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let failed_run = e
                .downcast_ref::<SimError>()
                .is_some_and(|s| matches!(s, SimError::StepFailure { .. } | SimError::Solver(_)));
            ExitCode::from(if failed_run { 1 } else { 2 })
        }
    }
}
