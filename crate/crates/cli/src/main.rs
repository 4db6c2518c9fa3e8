mod commands;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{HopsArgs, SimulationError, Status};
use scenario::{ModeSelect, Overrides, Scenario};

/// Failover traffic engineering lab: solve, compile, simulate.
#[derive(Parser, Debug)]
#[command(name = "tel-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file (JSON). Built-in defaults are used when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Base seed for the solver and random demands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of seeded runs to average.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Routing modes to simulate.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeSelect>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select primary and backup paths and write plans.json.
    Solve(Common),
    /// Run the flow simulator and write throughput.csv, fct.csv and summary.json.
    Simulate(Common),
    /// Compile plans into rules.jsonl and memory.csv.
    Rules(Common),
    /// Compare hop counts with shortest paths over a directory of GraphML files.
    Hops {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "data/topologyzoo")]
        topology_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_links: usize,
        #[arg(long, default_value_t = 250)]
        max_links: usize,
        /// Host pairs sampled per topology.
        #[arg(long, default_value_t = 200)]
        max_pairs: usize,
    },
    /// Check plans against the capacity, conservation, delay and link-once constraints.
    Validate(Common),
    /// Print the effective scenario as JSON.
    Show(Common),
}

fn load(common: &Common) -> anyhow::Result<Scenario> {
    let mut sc = Scenario::load(common.scenario.as_deref())?;
    sc.apply(&Overrides {
        seed: common.seed,
        replicas: common.replicas,
        out: common.out.clone(),
        mode: common.mode,
    });
    sc.validate()?;
    Ok(sc)
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    match cli.command {
        Command::Solve(c) => commands::cmd_solve(&load(&c)?),
        Command::Simulate(c) => commands::cmd_simulate(&load(&c)?),
        Command::Rules(c) => commands::cmd_rules(&load(&c)?),
        Command::Validate(c) => commands::cmd_validate(&load(&c)?),
        Command::Hops {
            common,
            topology_dir,
            min_links,
            max_links,
            max_pairs,
        } => commands::cmd_hops(
            &load(&common)?,
            &HopsArgs {
                topology_dir,
                min_links,
                max_links,
                max_pairs,
            },
        ),
        Command::Show(c) => {
            println!("{}", load(&c)?.to_json());
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TEL_LAB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<SimulationError>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
