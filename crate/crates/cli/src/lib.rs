//! `ccc` command line: single runs, compliance sweeps, controller ablations
//! and scenario validation.
//!
//! Exit codes: 0 success, 1 infeasible maneuver, 2 invalid input,
//! 3 internal or solver failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use ccc_core::compliance::ControllerMode;
use ccc_core::io::{self, IoError, LoadedScenario};
use ccc_core::sim::{ablation_run, run_maneuver, sweep_initial_compliance, RunConfig, SimConfig, SimError};
use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ccc", version, about = "Lane-change simulator with cooperation compliance control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ScenarioArg {
    /// Scenario JSON file; the bundled default scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one maneuver and write its traces.
    Run {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Controllers to run: both, global, local or none.
        #[arg(long)]
        mode: Option<ControllerMode>,
        /// Directory for the CSV traces and metrics.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vary one vehicle's initial compliance, with and without control.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.2, 0.5, 0.8])]
        levels: Vec<f64>,
        #[arg(long, default_value = "4")]
        vehicle: String,
        /// Output directory for sweep.csv; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both controllers, the local one only and the global one only.
    Ablate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load and validate a scenario, listing the defaults it relies on.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArg,
    },
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Internal(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        if e.is_input() {
            Failure::Input(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Failure::Input(e.to_string()),
            other => Failure::Internal(other.to_string()),
        }
    }
}

fn load(arg: &ScenarioArg) -> Result<LoadedScenario, Failure> {
    Ok(match &arg.scenario {
        Some(path) => io::load_scenario(path)?,
        None => io::paper_default(),
    })
}

fn with_mode(cfg: &RunConfig, mode: ControllerMode) -> RunConfig {
    RunConfig {
        sim: SimConfig { mode, ..cfg.sim },
        ..*cfg
    }
}

// a closed pipe downstream is not an error of ours
fn say(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print_json<T: serde::Serialize>(value: &T) {
    say(&serde_json::to_string_pretty(value).expect("report serializes"));
}

fn execute(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Run { scenario, mode, out } => {
            let l = load(&scenario)?;
            let cfg = mode.map_or(l.config, |m| with_mode(&l.config, m));
            let result = run_maneuver(&l.scenario, &cfg)?;
            match out {
                Some(dir) => print_json(&io::write_run(&result, &l.scenario, &l.defaults, &dir)?),
                None => print_json(&io::MetricsBlock::new(&result, &l.scenario)),
            }
            Ok(if result.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
        }
        Command::Sweep {
            scenario,
            levels,
            vehicle,
            out,
        } => {
            let l = load(&scenario)?;
            if let Some(bad) = levels.iter().find(|q| !(0.0..=1.0).contains(*q)) {
                return Err(Failure::Input(format!("level {bad} outside [0, 1]")));
            }
            let rows = sweep_initial_compliance(&l.scenario, &vehicle, &levels, &l.config)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Failure::Internal(format!("{}: {e}", dir.display())))?;
                    let path = io::write_sweep(&rows, &dir.join("sweep.csv"))?;
                    say(&path.display().to_string());
                }
                None => {
                    let _ = io::write_sweep_to(&rows, std::io::stdout().lock());
                }
            }
            Ok(EXIT_OK)
        }
        Command::Ablate { scenario, out } => {
            let l = load(&scenario)?;
            let results = ablation_run(&l.scenario, &l.config)?;
            match out {
                Some(dir) => {
                    for r in &results {
                        io::write_run(r, &l.scenario, &l.defaults, &dir.join(r.mode.as_str()))?;
                    }
                    let path = io::write_ablation(&results, &dir.join("ablation.csv"))?;
                    say(&path.display().to_string());
                }
                None => {
                    let blocks: Vec<_> = results.iter().map(|r| io::MetricsBlock::new(r, &l.scenario)).collect();
                    print_json(&blocks);
                }
            }
            Ok(EXIT_OK)
        }
        Command::Validate { scenario } => {
            let l = load(&scenario)?;
            say(&format!(
                "valid: {} fast-lane vehicles, merging {}, obstacle {}",
                l.scenario.fast_lane().len(),
                l.scenario.merging().id,
                l.scenario.obstacle().id
            ));
            for d in &l.defaults {
                say(&format!("default {d}"));
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            EXIT_INTERNAL
        }
    }
}
