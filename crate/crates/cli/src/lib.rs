//! Command-line driver for detector design and simulation.
//!
//! Exit status: 0 on success, 1 when the design is infeasible, a Riccati
//! solution is unbounded, the simulation diverges or a verification check
//! fails, 2 on configuration and file errors. Diagnostics go to stderr.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hinf_detect::config::Overrides;
use hinf_detect::workflow::{
    design_run, load_scenario, simulate_run, sweep_run, verify_run, Outcome, RunDir,
};
use hinf_detect::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "hinf-detect",
    version,
    about = "Decentralized H-infinity attack detector design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check feasibility and compute gain schedules.
    Design(RunArgs),
    /// Simulate the closed loop with previously designed gains.
    Simulate(RunArgs),
    /// Re-check the invariants of an existing run directory.
    Verify {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Tabulate feasibility over a list of attenuation levels.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated gamma values.
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Simulation step.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            gamma: self.gamma,
            horizon: self.horizon,
            step: self.dt,
            seed: self.seed,
        }
    }
}

fn exit_for(e: &Error) -> i32 {
    if e.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_FAILED
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_for(e)
}

fn outcome(o: Outcome) -> i32 {
    match o {
        Outcome::Ok => EXIT_OK,
        Outcome::Failed(msg) => {
            eprintln!("infeasible: {msg}");
            EXIT_FAILED
        }
    }
}

fn run(cmd: Command) -> Result<i32, Error> {
    match cmd {
        Command::Design(a) => {
            let (cfg, s) = load_scenario(&a.scenario, &a.overrides())?;
            design_run(&cfg, &s, &RunDir::new(&a.out_dir)).map(outcome)
        }
        Command::Simulate(a) => {
            let (cfg, s) = load_scenario(&a.scenario, &a.overrides())?;
            let (_, rep) = simulate_run(&cfg, &s, &RunDir::new(&a.out_dir))?;
            for n in &rep.nodes {
                eprintln!(
                    "node {}: settled |phi| {:.4}, tracking tail {:.2e}, attenuation ratio {:.4}, detections {}",
                    n.node,
                    n.tracking.settled_norm,
                    n.tracking.tail_fraction,
                    n.hinf.ratio,
                    n.detections.len()
                );
            }
            Ok(EXIT_OK)
        }
        Command::Verify { out_dir } => {
            let checks = verify_run(&RunDir::new(out_dir))?;
            let mut ok = true;
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                ok &= c.passed;
            }
            Ok(if ok { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Sweep { run, gammas } => {
            let (_, s) = load_scenario(&run.scenario, &run.overrides())?;
            let rows = sweep_run(&s, &gammas, &RunDir::new(&run.out_dir))?;
            let feasible: Vec<String> = rows
                .iter()
                .filter(|r| r.feasible())
                .map(|r| r.gamma.to_string())
                .collect();
            eprintln!("feasible gammas: [{}]", feasible.join(", "));
            Ok(EXIT_OK)
        }
    }
}

/// Parse `argv` (including the program name) and run; returns the exit status.
pub fn run_cli<S: AsRef<str>>(argv: &[S]) -> i32 {
    let cli = match Cli::try_parse_from(argv.iter().map(|s| s.as_ref())) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => report(&e),
    }
}
