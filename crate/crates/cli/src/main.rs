use clap::Parser;
use istc_core::error::{PipelineError, ScenarioError};
use istc_core::pipeline::{run_pipeline, PipelineOptions};
use istc_core::scenario::parse_scenario;
use std::path::PathBuf;
use std::process::ExitCode;

/// Plan collision-free trajectories for several vehicles: corridors first,
/// then one trajectory per vehicle inside its corridor.
#[derive(Debug, Parser)]
#[command(name = "istc", version)]
struct Args {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Stop after the corridor layer.
    #[arg(long)]
    layer1_only: bool,
    /// Serial corridor search without a wall-clock limit; output is reproducible byte for byte.
    #[arg(long)]
    deterministic: bool,
    /// Corridor search wall-clock budget in seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    /// Corridor search node budget.
    #[arg(long)]
    node_budget: Option<usize>,
    /// Trajectory time step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Seed for randomized test inputs. The planner itself draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("io: cannot read {}: {e}", args.scenario.display());
            return ExitCode::from(6);
        }
    };
    let mut s = match parse_scenario(&text) {
        Ok(s) => s,
        Err(ScenarioError::Parse(m)) => {
            eprintln!("validation: {m}");
            return ExitCode::from(2);
        }
        Err(ScenarioError::Validation(r)) => {
            eprintln!("{}", PipelineError::Validation(r));
            return ExitCode::from(2);
        }
    };
    if let Some(t) = args.time_budget {
        s.config.time_budget = t;
    }
    if let Some(n) = args.node_budget {
        s.config.node_budget = n;
    }
    if let Some(dt) = args.dt {
        s.config.dt = dt;
    }
    let opts = PipelineOptions { deterministic: args.deterministic, layer1_only: args.layer1_only };
    match run_pipeline(&s, &opts, Some(&args.out)) {
        Ok(out) => match out.report {
            Some(r) if !r.passed() => {
                eprintln!("trajectory: plan has {} violations, see report.txt", r.violations.len());
                ExitCode::from(5)
            }
            Some(r) => {
                println!("ok: {} vehicles, L_total {:.3} m", r.vehicles.len(), r.l_total);
                ExitCode::SUCCESS
            }
            None => {
                println!("ok: corridors for {} vehicles", out.istc.corridors.len());
                ExitCode::SUCCESS
            }
        },
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
