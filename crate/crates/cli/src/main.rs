use clap::{Args, Parser, Subcommand};
use spncs_cli::commands;
use spncs_cli::error::{CliError, Result};
use spncs_cli::scenario::{self, PolicyName, Setup};
use std::path::PathBuf;
use std::process::ExitCode;

/// Two-time-scale networked control: bounds, certificates and simulation.
#[derive(Parser)]
#[command(name = "spncs", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Scenario JSON; the builtin example when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Directory for reports, trajectories and plots.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated time-scale parameters.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Comma-separated seeds for initial states and random schedules.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Jump policy (comma-separated for sweep).
    #[arg(long, value_enum, value_delimiter = ',')]
    policy: Option<Vec<PolicyName>>,
    /// Nominal RK4 step in seconds.
    #[arg(long)]
    step: Option<f64>,
    /// Simulation horizon in seconds.
    #[arg(long)]
    t_end: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Slow and fast MATI bounds.
    Mati(Common),
    /// Full certificate.
    Design(Common),
    /// Simulate the scenario grid.
    Simulate(Common),
    /// Monitor trajectories against the certificate.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV written by `simulate`; simulates when omitted.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Side-by-side comparison for the builtin example.
    ReproduceExample {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parallel grid over epsilon, seeds and policies.
    Sweep(Common),
}

fn setup(c: &Common) -> Result<Setup> {
    let mut sc = match &c.scenario {
        Some(p) => scenario::load(p)?,
        None => scenario::builtin_example(),
    };
    if let Some(e) = &c.epsilon {
        sc.simulation.epsilon = e.clone();
    }
    if let Some(s) = &c.seed {
        sc.simulation.seeds = s.clone();
    }
    if let Some(p) = c.policy.as_ref().and_then(|p| p.first()) {
        sc.simulation.policy = *p;
    }
    if c.step.is_some() {
        sc.simulation.step = c.step;
    }
    if let Some(t) = c.t_end {
        sc.simulation.t_end = t;
    }
    if c.out.is_some() {
        sc.output.dir = c.out.clone();
    }
    sc.resolve()
}

fn print<T: serde::Serialize>(v: &T) {
    print!("{}", spncs_cli::json::to_string(v));
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Mati(c) => {
            let s = setup(&c)?;
            let r = commands::mati(&s)?;
            if let Some(d) = &s.out_dir {
                commands::write_json(d, "mati.json", &r)?;
            }
            print(&r);
        }
        Cmd::Design(c) => {
            let s = setup(&c)?;
            let r = commands::design(&s)?;
            if let Some(d) = &s.out_dir {
                commands::write_json(d, "certificate.json", &r)?;
            }
            print(&r);
        }
        Cmd::Simulate(c) => {
            let s = setup(&c)?;
            print(&commands::simulate_cmd(&s, s.simulation.policy, s.out_dir.as_deref())?);
        }
        Cmd::Certify { common, trajectory } => {
            let s = setup(&common)?;
            let traj = match &trajectory {
                Some(p) => {
                    let f = std::fs::File::open(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                    let (dims, t) = spncs_cli::csvio::read_trajectory(f)?;
                    if dims != s.cl.dims && !t.samples.is_empty() {
                        return Err(CliError::Schema(format!(
                            "trajectory dims {dims:?} do not match the scenario {:?}",
                            s.cl.dims
                        )));
                    }
                    Some(t)
                }
                None => None,
            };
            print(&commands::certify(&s, s.simulation.policy, traj.as_ref(), s.out_dir.as_deref())?);
        }
        Cmd::ReproduceExample { out } => {
            let r = commands::reproduce_example()?;
            if let Some(d) = &out {
                commands::write_json(d, "reproduce.json", &r)?;
            }
            print!("{}", commands::format_table(&r));
        }
        Cmd::Sweep(c) => {
            let s = setup(&c)?;
            let policies = c.policy.clone().unwrap_or_else(|| vec![PolicyName::Earliest, PolicyName::Latest, PolicyName::Random]);
            print(&commands::sweep(&s, &policies, s.out_dir.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spncs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
