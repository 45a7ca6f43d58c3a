use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gaslight_cli::{run, CliError, Command, ScenarioConfig};

#[derive(Parser)]
#[command(name = "gaslight", version, about = "Experiments on observation-manipulation games")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate trajectories and compare the two cost representations.
    Simulate(Common),
    /// Run the filter and cost deviation bound harnesses.
    VerifyBounds(Common),
    /// Certify every menu entry against the trust level.
    Stealth(Common),
    /// Solve the DM's dynamic program, with the brute-force cross-check when small enough.
    Solve(Common),
    /// Search the menu for the gaslighter's equilibrium effort.
    Equilibrium(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for artifacts and run_report.json.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Fail on reported-only checks too.
    #[arg(long)]
    strict: bool,
}

fn execute(command: Command, args: &Common) -> anyhow::Result<i32> {
    let mut config = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let scenario = config.validate()?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let report = run(command, &scenario, &args.out, args.strict)?;
    for c in &report.checks {
        let status = if c.passed { "ok" } else { "FAILED" };
        let kind = if c.asserted { "asserted" } else { "reported" };
        println!("{:<48} {status} ({kind})", c.name);
    }
    println!(
        "{} finished in {:.2}s; outputs in {}",
        report.command,
        report.wall_time_s,
        args.out.display()
    );
    Ok(report.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::VerifyBounds(a) => (Command::VerifyBounds, a),
        Cmd::Stealth(a) => (Command::Stealth, a),
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Equilibrium(a) => (Command::Equilibrium, a),
    };
    match execute(command, args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(2, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
