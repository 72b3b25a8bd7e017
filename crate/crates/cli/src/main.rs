use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use subsel_core::harness::{
    export_report, run_experiment, sweep, AgentKind, ExperimentConfig, OracleSpec, SweepAxis, World,
};
use subsel_core::reward::external::serve;
use subsel_core::Error;

/// Overrides the oracle launch command of every config.
const ORACLE_ENV: &str = "SUBSEL_ORACLE_CMD";

#[derive(Parser)]
#[command(name = "subsel", version, about = "Cluster-level training subset selection")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment (all seeds of the config).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the config once per value of one axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of k, delta, agent, encoder.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rewrite the selected point ids of a finished run.
    Export {
        #[arg(long)]
        report: PathBuf,
    },
    /// Exhaustive optimum over all budget-sized cluster subsets.
    Brute {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the config's synthetic landscape over the oracle protocol on
    /// stdin/stdout.
    StubOracle {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    if let Ok(command) = std::env::var(ORACLE_ENV) {
        if !command.trim().is_empty() {
            let timeout_ms = match &cfg.oracle {
                OracleSpec::Command { timeout_ms, .. } => *timeout_ms,
                OracleSpec::Synthetic => 600_000,
            };
            cfg.oracle = OracleSpec::Command { command, timeout_ms };
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    let report = run_experiment(cfg)?;
    for r in &report.runs {
        if let Some(res) = &r.result {
            println!(
                "{} seed {}: score {:.6} with {} oracle calls",
                r.agent, r.seed, res.score, res.oracle_calls
            );
        }
    }
    println!("report: {}", cfg.output_dir.join("report.json").display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Run { config, seed, agent, out } => {
            let mut cfg = load_config(&config, out)?;
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            if let Some(agent) = agent {
                cfg.agent = AgentKind::parse(&agent)?;
            }
            cfg.validate()?;
            run(&cfg)
        }
        Cmd::Brute { config, out } => {
            let mut cfg = load_config(&config, out)?;
            cfg.agent = AgentKind::BruteForce;
            cfg.seeds.truncate(1);
            run(&cfg)
        }
        Cmd::Sweep { config, axis, values, out } => {
            let cfg = load_config(&config, out)?;
            let axis = SweepAxis::parse(&axis)?;
            let summary = sweep(&cfg, axis, &values)?;
            let mut failed = None;
            for c in &summary.cells {
                match (&c.mean_score, &c.error) {
                    (Some(m), _) => println!("{}: mean score {m:.6} over {} runs", c.output_dir, c.n_runs),
                    (None, Some(e)) => {
                        println!("{}: failed: {e}", c.output_dir);
                        failed.get_or_insert_with(|| e.clone());
                    }
                    _ => {}
                }
            }
            println!("summary: {}", cfg.output_dir.join("summary.json").display());
            match failed {
                Some(e) => Err(cell_error(&e)).context("sweep had failing cells"),
                None => Ok(()),
            }
        }
        Cmd::Export { report } => {
            let written = export_report(&report)?;
            for p in &written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Cmd::StubOracle { config } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            cfg.oracle = OracleSpec::Synthetic;
            cfg.cache_path = None;
            let world = World::build(&cfg)?;
            let stdin = io::stdin();
            serve(world.oracle.as_ref(), stdin.lock(), BufWriter::new(io::stdout()))?;
            Ok(())
        }
    }
}

/// Recovers the error class of a failed sweep cell from its message.
fn cell_error(message: &str) -> Error {
    let rest = |p: &str| message.strip_prefix(p).unwrap_or(message).to_string();
    if message.starts_with("oracle failure: ") || message.starts_with("reward unavailable: ") {
        Error::OracleFailure(rest("oracle failure: "))
    } else if message.starts_with("invalid configuration: ") {
        Error::ConfigInvalid(rest("invalid configuration: "))
    } else {
        Error::InvalidState(message.to_string())
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::ConfigInvalid(_)) => 2,
        Some(e) if e.is_oracle_failure() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
