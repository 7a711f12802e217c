//! `cadm`: run the forward, deterministic and randomized decision makers
//! against a simulated regime-switching market and write traces to disk.
//!
//! Exit codes: 0 on success, 1 when a solver fails, 2 on bad input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cadm_core::adversary::build_polytope;
use cadm_core::exec::Execution;
use cadm_core::experiments::{
    generate_scenario, parse_budget_range, run_budget_sweep, run_simulation, write_records_json, write_simplex_plots,
    write_sweep_csv, write_timeseries_csv, Agent, RunConfig, SweepConfig, TimestepRecord,
};
use cadm_core::filter::ObservationTrace;
use cadm_core::obfuscator::{Budget, ObfuscatorOptions};
use cadm_core::privacy::{EmptySetPolicy, PrivacyMeasure};
use cadm_core::{Action, Belief, Error, Scenario};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cadm", version, about = "Counter-adversarial portfolio decisions under belief reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write timeseries.csv, records.json and friends.
    Simulate(SimulateArgs),
    /// Average privacy and cost over repeated runs for a list of budgets.
    Sweep(SweepArgs),
    /// Generate a random scenario and print it as JSON.
    Generate(ScenarioArgs),
    /// Print the belief polytope of an action as JSON.
    Polytope(PolytopeArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario JSON file; its rng_seed drives the simulation.
    #[arg(long, conflicts_with_all = ["seed", "dims"])]
    scenario: Option<PathBuf>,
    /// Generator and simulation seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Regimes, assets and observation symbols.
    #[arg(long, default_value = "3,3,3")]
    dims: String,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    /// Fractional cost budget c_b.
    #[arg(long, default_value_t = 0.1)]
    budget: f64,
    /// infeasible | nonunique | nonexist | desired | maximal
    #[arg(long, default_value = "maximal")]
    measure: String,
    /// Decoy belief for `--measure desired`, comma-separated.
    #[arg(long)]
    desired: Option<String>,
    /// Simplex grid resolution N.
    #[arg(long, default_value_t = 20)]
    grid: usize,
    #[arg(long, default_value = "odm,cdm,pdm")]
    agents: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Score of an action whose reconstruction is empty: worst (−∞) or best (+∞).
    #[arg(long, default_value = "worst")]
    empty_set_policy: String,
    /// Candidate set is the grid only, without the forward-optimal action.
    #[arg(long)]
    no_anchor: bool,
    /// Refine the deterministic choice by local search off the grid.
    #[arg(long)]
    refine: bool,
    /// Disable data-parallel evaluation.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also write simplex_<k>.svg ternary plots (three regimes, three assets).
    #[arg(long)]
    svg: bool,
    /// Replay this observation trace (JSON array) instead of simulating.
    #[arg(long, conflicts_with = "beliefs")]
    observations: Option<PathBuf>,
    /// Use these beliefs (JSON array of probability vectors) directly,
    /// bypassing the world and the filter.
    #[arg(long)]
    beliefs: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// start:step:stop or a comma-separated list.
    #[arg(long, default_value = "0:0.02:0.3")]
    budgets: String,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
}

#[derive(Args)]
struct PolytopeArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Allocation, comma-separated.
    #[arg(long)]
    action: String,
}

fn parse_vector(text: &str, what: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse {what} `{text}`")))
        })
        .collect()
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json_error(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |source| Error::Json {
        path: path.to_path_buf(),
        source,
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, Error> {
    if let Some(path) = &args.scenario {
        return Scenario::from_json(&read_text(path)?).map_err(json_error(path));
    }
    let dims = args
        .dims
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| Error::Config(format!("cannot parse --dims `{}` (X,U,Y)", args.dims)))?;
    let [x, u, y] = dims[..] else {
        return Err(Error::Config(format!("--dims needs three values X,U,Y, got `{}`", args.dims)));
    };
    generate_scenario(args.seed, x, u, y)
}

fn build_config(args: &RunArgs, scenario: &Scenario) -> Result<RunConfig, Error> {
    let empty_set: EmptySetPolicy = args.empty_set_policy.parse()?;
    let desired = args
        .desired
        .as_deref()
        .map(|d| Belief::normalized(parse_vector(d, "--desired")?))
        .transpose()?;
    let execution = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    Ok(RunConfig {
        horizon: args.horizon,
        budget: Budget::new(args.budget)?,
        measure: PrivacyMeasure::parse(&args.measure, desired, empty_set)?,
        empty_set,
        grid_resolution: args.grid,
        agents: Agent::parse_list(&args.agents)?,
        seed: scenario.rng_seed(),
        obfuscator: ObfuscatorOptions {
            include_odm_anchor: !args.no_anchor,
            refine: args.refine,
            execution,
        },
        observations: None,
        beliefs: None,
    })
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn print_summary(records: &[TimestepRecord], agents: &[Agent]) {
    for &agent in agents {
        let steps: Vec<_> = records.iter().filter_map(|r| r.agent(agent)).collect();
        let n = steps.len() as f64;
        let privacy = steps.iter().map(|s| s.privacy).sum::<f64>() / n;
        let increase = steps.iter().map(|s| s.cost_increase).sum::<f64>() / n;
        println!("{agent}: mean privacy {privacy:.6}, mean cost increase {increase:.6}");
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let scenario = load_scenario(&args.run.scenario)?;
    let mut config = build_config(&args.run, &scenario)?;
    if args.svg && (scenario.states() != 3 || scenario.assets() != 3) {
        return Err(Error::TernaryDimension {
            actions: scenario.assets(),
            beliefs: scenario.states(),
        });
    }
    if let Some(path) = &args.observations {
        let trace: ObservationTrace = serde_json::from_str(&read_text(path)?).map_err(json_error(path))?;
        config.observations = Some(trace);
    }
    if let Some(path) = &args.beliefs {
        let rows: Vec<Vec<f64>> = serde_json::from_str(&read_text(path)?).map_err(json_error(path))?;
        let beliefs = rows.into_iter().map(Belief::normalized).collect::<Result<Vec<_>, _>>()?;
        config.beliefs = Some(beliefs);
    }
    let records = run_simulation(&scenario, &config)?;
    let out = &args.run.out;
    create_dir(out)?;
    write_timeseries_csv(&out.join("timeseries.csv"), &records)?;
    write_records_json(&out.join("records.json"), &records)?;
    if let Some(observations) = records.iter().map(|r| r.observation).collect::<Option<Vec<_>>>() {
        write_records_json(&out.join("observations.json"), &ObservationTrace(observations))?;
    }
    write_records_json(&out.join("scenario.json"), &scenario)?;
    if args.svg {
        write_simplex_plots(out, &scenario, &records, config.grid_resolution)?;
    }
    print_summary(&records, &config.agents);
    println!("wrote {}", out.display());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Error> {
    let scenario = load_scenario(&args.run.scenario)?;
    let config = build_config(&args.run, &scenario)?;
    let sweep = SweepConfig {
        budgets: parse_budget_range(&args.budgets)?,
        repeats: args.repeats,
        execution: config.obfuscator.execution,
    };
    let table = run_budget_sweep(&scenario, &config, &sweep)?;
    let out = &args.run.out;
    create_dir(out)?;
    write_sweep_csv(&out.join("sweep.csv"), &table)?;
    write_records_json(&out.join("sweep.json"), &table)?;
    write_records_json(&out.join("scenario.json"), &scenario)?;
    for row in &table.rows {
        println!(
            "c_b={:.4} {}: privacy {:.6} ± {:.6}, cost increase {:.6}",
            row.budget, row.agent, row.privacy.mean, row.privacy.se, row.cost_increase.mean
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn polytope(args: PolytopeArgs) -> Result<(), Error> {
    let scenario = load_scenario(&args.scenario)?;
    let action = Action::new(parse_vector(&args.action, "--action")?)?;
    println!("{}", build_polytope(&scenario, &action)?.to_json());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Generate(a) => load_scenario(&a).map(|s| println!("{}", s.to_json())),
        Command::Polytope(a) => polytope(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_solver_failure() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
