//! Configuration, experiment commands and report emission behind the
//! `gaslight` binary.
//!
//! Output files, per command:
//! - `simulate`: `trajectories.csv` (trial, stage, x, y, u, sigma_mass) and
//!   `simulate.json` (both cost estimates and their agreement).
//! - `verify-bounds`: `lemma1.csv`, `lemma2.csv`, `theorem1.csv` (trial, stage,
//!   actual, bound, slack), `theorem2_3.csv` (one row per menu entry) and
//!   `bounds_summary.json`.
//! - `stealth`: `stealth.csv` (id, stage, integral, s_bar, ess_lhs, ess_se,
//!   sufficient_pass, empirical_pass) and `stealth.json`.
//! - `solve`: `alphas/<id>.json` per menu entry and `solve.json`.
//! - `equilibrium`: `candidates.csv` (index, stage_1..stage_K, objective,
//!   objective_se, design_cost, stealth_pass, dm_value) and `equilibrium.json`.
//!
//! Every command also writes `run_report.json`.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::Path;
use std::time::Instant;

pub use config::{Scenario, ScenarioConfig};
pub use error::CliError;
pub use report::{Check, RunReport};

use report::ArtifactWriter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    VerifyBounds,
    Stealth,
    Solve,
    Equilibrium,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VerifyBounds => "verify-bounds",
            Command::Stealth => "stealth",
            Command::Solve => "solve",
            Command::Equilibrium => "equilibrium",
        }
    }
}

/// Runs one command into `out_dir` and writes `run_report.json` there.
pub fn run(command: Command, scenario: &Scenario, out_dir: &Path, strict: bool) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut out = ArtifactWriter::new(out_dir)?;
    let checks = match command {
        Command::Simulate => commands::simulate(scenario, &mut out)?,
        Command::VerifyBounds => commands::verify_bounds(scenario, &mut out)?,
        Command::Stealth => commands::stealth(scenario, &mut out)?,
        Command::Solve => commands::solve(scenario, &mut out)?,
        Command::Equilibrium => commands::equilibrium(scenario, &mut out)?,
    };
    let mut artifacts = out.artifacts().to_vec();
    artifacts.push("run_report.json".into());
    let report = RunReport {
        command: command.name().into(),
        config_hash: scenario.config.hash(),
        seed: scenario.config.seed,
        strict,
        wall_time_s: start.elapsed().as_secs_f64(),
        artifacts,
        exit_code: report::exit_code(&checks, strict),
        checks,
    };
    out.json("run_report.json", &report)?;
    Ok(report)
}
