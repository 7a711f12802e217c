//! Simulation harness: runs the three decision makers side by side against
//! a simulated regime-switching market and collects privacy and cost traces.

mod generate;
mod output;
mod svg;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use generate::{generate_scenario, COVARIANCE_FLOOR, REGIME_PERSISTENCE};
pub use output::{
    format_float, parse_budget_range, read_timeseries, write_records_json, write_sweep_csv, write_timeseries_csv,
    TimeseriesRow,
};
pub use svg::{ternary_svg, write_simplex_plots};

use crate::adversary::build_polytope;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::filter::{filter_update, simulate_step, ObservationTrace, WorldState};
use crate::model::{Belief, Scenario};
use crate::obfuscator::{
    cdm_from_scores, pdm_from_scores, sample_action, score_candidates, simplex_grid, solve_odm, ActionGrid, Budget,
    Decision, ObfuscatorOptions,
};
use crate::privacy::{evaluate, EmptySetPolicy, PrivacyMeasure};
use crate::rng::{policy_stream, world_stream, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Agent {
    /// Cost-optimal, no protection.
    Odm,
    /// Deterministic obfuscation under a hard cost cap.
    Cdm,
    /// Randomized obfuscation under an average cost cap.
    Pdm,
}

impl Agent {
    pub const ALL: [Agent; 3] = [Agent::Odm, Agent::Cdm, Agent::Pdm];

    pub fn name(self) -> &'static str {
        match self {
            Agent::Odm => "odm",
            Agent::Cdm => "cdm",
            Agent::Pdm => "pdm",
        }
    }

    /// Parses a comma-separated list such as `odm,cdm,pdm` into a sorted,
    /// duplicate-free set.
    pub fn parse_list(text: &str) -> Result<Vec<Agent>> {
        let mut agents = text
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<Vec<Agent>>>()?;
        agents.sort();
        agents.dedup();
        if agents.is_empty() {
            return Err(Error::Config("at least one agent is required".into()));
        }
        Ok(agents)
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Agent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "odm" => Ok(Agent::Odm),
            "cdm" => Ok(Agent::Cdm),
            "pdm" => Ok(Agent::Pdm),
            other => Err(Error::Config(format!("unknown agent `{other}` (odm|cdm|pdm)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub horizon: usize,
    pub budget: Budget,
    pub measure: PrivacyMeasure,
    /// How the recorded privacy distance treats an empty reconstruction.
    pub empty_set: EmptySetPolicy,
    pub grid_resolution: usize,
    pub agents: Vec<Agent>,
    /// Seed of the world and policy streams.
    pub seed: u64,
    pub obfuscator: ObfuscatorOptions,
    /// Replays these observations instead of simulating the world.
    pub observations: Option<ObservationTrace>,
    /// Uses these beliefs directly, bypassing both the world and the filter.
    pub beliefs: Option<Vec<Belief>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: 50,
            budget: Budget::new(0.1).expect("valid budget"),
            measure: PrivacyMeasure::maximal(),
            empty_set: EmptySetPolicy::Worst,
            grid_resolution: 20,
            agents: Agent::ALL.to_vec(),
            seed: 0,
            obfuscator: ObfuscatorOptions::default(),
            observations: None,
            beliefs: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.agents.is_empty() {
            return Err(Error::Config("at least one agent is required".into()));
        }
        if self.grid_resolution == 0 {
            return Err(Error::Config("grid resolution must be at least 1".into()));
        }
        if let PrivacyMeasure::DesiredObfuscation(b) = &self.measure {
            if b.dim() != scenario.states() {
                return Err(Error::DimensionMismatch {
                    context: "desired belief",
                    expected: scenario.states(),
                    actual: b.dim(),
                });
            }
        }
        if let Some(trace) = &self.observations {
            if trace.0.is_empty() {
                return Err(Error::Config("observation trace is empty".into()));
            }
            trace.validate(scenario)?;
        }
        if let Some(beliefs) = &self.beliefs {
            if self.observations.is_some() {
                return Err(Error::Config("give either an observation trace or a belief trace, not both".into()));
            }
            if beliefs.is_empty() {
                return Err(Error::Config("belief trace is empty".into()));
            }
            if let Some(b) = beliefs.iter().find(|b| b.dim() != scenario.states()) {
                return Err(Error::DimensionMismatch {
                    context: "belief trace",
                    expected: scenario.states(),
                    actual: b.dim(),
                });
            }
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        match (&self.observations, &self.beliefs) {
            (Some(t), _) => t.0.len(),
            (None, Some(b)) => b.len(),
            (None, None) => self.horizon,
        }
    }

    fn has(&self, agent: Agent) -> bool {
        self.agents.contains(&agent)
    }
}

/// Summary of the randomized agent's mixing policy at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    /// Candidate actions with positive mass, in candidate order.
    pub support: Vec<Vec<f64>>,
    pub mass: Vec<f64>,
    /// LP optimum: expected score under the configured measure.
    pub expected_score: f64,
    pub expected_cost: f64,
    /// Positive masses in the LP's basic solution before support reduction.
    pub raw_support: usize,
    /// True when the mixing LP was infeasible and the forward action was
    /// played instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentStep {
    pub agent: Agent,
    pub action: Vec<f64>,
    /// Expected cost under the true belief.
    pub cost: f64,
    /// Privacy score under the configured measure.
    pub score: f64,
    /// Distance from the true belief to the adversary's reconstruction.
    pub privacy: f64,
    /// `(cost − c*)/|c*|`.
    pub cost_increase: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimestepRecord {
    pub k: usize,
    /// Hidden regime after the step; unknown when replaying observations.
    pub regime: Option<usize>,
    /// Absent when the run replays a belief trace.
    pub observation: Option<usize>,
    pub belief: Vec<f64>,
    pub optimal_cost: f64,
    pub cap: f64,
    pub agents: Vec<AgentStep>,
}

impl TimestepRecord {
    pub fn agent(&self, agent: Agent) -> Option<&AgentStep> {
        self.agents.iter().find(|a| a.agent == agent)
    }
}

/// Normalized excess cost; falls back to the raw excess when the optimum is
/// numerically zero.
pub fn cost_increase(cost: f64, optimal: f64) -> f64 {
    if optimal.abs() < 1e-12 {
        cost - optimal
    } else {
        (cost - optimal) / optimal.abs()
    }
}

fn distance_to_reconstruction(
    scenario: &Scenario,
    pi: &Belief,
    decision: &Decision,
    measure: &PrivacyMeasure,
    empty_set: EmptySetPolicy,
) -> Result<f64> {
    if *measure == PrivacyMeasure::MaximalObfuscation(empty_set) {
        return Ok(decision.privacy.value());
    }
    let poly = build_polytope(scenario, &decision.action)?;
    match poly.distance(pi) {
        Ok(d) => Ok(d),
        Err(Error::EmptyPolytope) => Ok(match empty_set {
            EmptySetPolicy::Worst => f64::NEG_INFINITY,
            EmptySetPolicy::Best => f64::INFINITY,
        }),
        Err(e) => Err(e),
    }
}

/// Decisions of every enabled agent at one belief, for several budgets at
/// once. Candidate scoring is shared across budgets.
fn decide(
    scenario: &Scenario,
    config: &RunConfig,
    pi: &Belief,
    grid: &ActionGrid,
    budgets: &[Budget],
    policy_rngs: &mut [SimRng],
) -> Result<(f64, Vec<f64>, Vec<Vec<AgentStep>>)> {
    let measure = &config.measure;
    let forward = solve_odm(scenario, pi)?;
    let c_star = forward.cost;
    let caps: Vec<f64> = budgets.iter().map(|b| b.cap(c_star)).collect();
    let limit = if config.has(Agent::Pdm) {
        None
    } else {
        Some(caps.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    };
    let needs_scores = config.has(Agent::Cdm) || config.has(Agent::Pdm);
    let scored = if needs_scores {
        Some(score_candidates(scenario, pi, measure, grid, &forward, limit, &config.obfuscator)?)
    } else {
        None
    };
    let odm_score = match scored.as_ref().and_then(|s| s.anchor.and_then(|a| s.privacy[a])) {
        Some(v) => v,
        None => evaluate(measure, scenario, &forward.action, pi)?,
    };
    let odm = forward.decision(odm_score);

    let step = |agent: Agent, d: &Decision, policy: Option<PolicySummary>| -> Result<AgentStep> {
        Ok(AgentStep {
            agent,
            action: d.action.alloc().to_vec(),
            cost: d.cost,
            score: d.privacy.value(),
            privacy: distance_to_reconstruction(scenario, pi, d, measure, config.empty_set)?,
            cost_increase: cost_increase(d.cost, c_star),
            policy,
        })
    };
    let odm_step = if config.has(Agent::Odm) {
        Some(step(Agent::Odm, &odm, None)?)
    } else {
        None
    };

    let mut per_budget = Vec::with_capacity(budgets.len());
    for (b, &cap) in caps.iter().enumerate() {
        let mut steps = Vec::with_capacity(config.agents.len());
        for &agent in &config.agents {
            match agent {
                Agent::Odm => steps.push(odm_step.clone().expect("odm enabled")),
                Agent::Cdm => {
                    let scored = scored.as_ref().expect("scores computed");
                    let d = cdm_from_scores(scenario, pi, measure, scored, &forward, cap, &config.obfuscator)?;
                    steps.push(step(Agent::Cdm, &d, None)?);
                }
                Agent::Pdm => {
                    let scored = scored.as_ref().expect("scores computed");
                    let (d, summary) = match pdm_from_scores(scored, cap) {
                        Ok(policy) => {
                            let d = sample_action(&policy, &mut policy_rngs[b]);
                            let support = policy.support();
                            let summary = PolicySummary {
                                support: support.iter().map(|&l| policy.candidates[l].alloc().to_vec()).collect(),
                                mass: support.iter().map(|&l| policy.mass[l]).collect(),
                                expected_score: policy.expected_privacy.value(),
                                expected_cost: policy.expected_cost,
                                raw_support: policy.raw_support,
                                fallback: false,
                            };
                            (d, summary)
                        }
                        Err(Error::PolicyInfeasible(_)) => {
                            let summary = PolicySummary {
                                support: vec![odm.action.alloc().to_vec()],
                                mass: vec![1.0],
                                expected_score: odm.privacy.value(),
                                expected_cost: odm.cost,
                                raw_support: 1,
                                fallback: true,
                            };
                            (odm.clone(), summary)
                        }
                        Err(e) => return Err(e),
                    };
                    steps.push(step(Agent::Pdm, &d, Some(summary))?);
                }
            }
        }
        per_budget.push(steps);
    }
    Ok((c_star, caps, per_budget))
}

/// Beliefs, observations and hidden regimes of one run of the world.
struct Trajectory {
    steps: Vec<(Option<usize>, Option<usize>, Belief)>,
}

fn trajectory(scenario: &Scenario, config: &RunConfig, run: u64) -> Result<Trajectory> {
    let mut belief = Belief::uniform(scenario.states());
    let mut steps = Vec::with_capacity(config.steps());
    match (&config.observations, &config.beliefs) {
        (Some(trace), _) => {
            for (i, &y) in trace.0.iter().enumerate() {
                belief = filter_update(scenario, &belief, y).map_err(|e| e.at_timestep(i + 1))?;
                steps.push((None, Some(y), belief.clone()));
            }
        }
        (None, Some(beliefs)) => {
            steps.extend(beliefs.iter().map(|b| (None, None, b.clone())));
        }
        (None, None) => {
            let mut rng = world_stream(config.seed, run);
            let x0 = generate::uniform_regime(scenario.states(), &mut rng);
            let mut state = WorldState::new(scenario, x0)?;
            for k in 1..=config.horizon {
                let (next, y) = simulate_step(scenario, state, &mut rng).map_err(|e| e.at_timestep(k))?;
                state = next;
                belief = filter_update(scenario, &belief, y).map_err(|e| e.at_timestep(k))?;
                steps.push((Some(state.regime), Some(y), belief.clone()));
            }
        }
    }
    Ok(Trajectory { steps })
}

fn simulate_run(
    scenario: &Scenario,
    config: &RunConfig,
    grid: &ActionGrid,
    budgets: &[Budget],
    run: u64,
) -> Result<Vec<Vec<TimestepRecord>>> {
    let traj = trajectory(scenario, config, run)?;
    let mut rngs: Vec<SimRng> = (0..budgets.len())
        .map(|b| policy_stream(config.seed, run, b as u64))
        .collect();
    let mut out: Vec<Vec<TimestepRecord>> = vec![Vec::with_capacity(traj.steps.len()); budgets.len()];
    for (i, (regime, y, belief)) in traj.steps.into_iter().enumerate() {
        let k = i + 1;
        let (c_star, caps, per_budget) =
            decide(scenario, config, &belief, grid, budgets, &mut rngs).map_err(|e| e.at_timestep(k))?;
        for (b, agents) in per_budget.into_iter().enumerate() {
            out[b].push(TimestepRecord {
                k,
                regime,
                observation: y,
                belief: belief.probs().to_vec(),
                optimal_cost: c_star,
                cap: caps[b],
                agents,
            });
        }
    }
    Ok(out)
}

/// One simulated run with every enabled agent; deterministic in
/// `(scenario, config)`.
pub fn run_simulation(scenario: &Scenario, config: &RunConfig) -> Result<Vec<TimestepRecord>> {
    config.validate(scenario)?;
    let grid = simplex_grid(scenario.assets(), config.grid_resolution)?;
    let mut runs = simulate_run(scenario, config, &grid, &[config.budget], 0)?;
    Ok(runs.pop().expect("one budget"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub budgets: Vec<f64>,
    pub repeats: usize,
    /// Parallelism across repeats.
    pub execution: Execution,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budgets.is_empty() {
            return Err(Error::Config("sweep needs at least one budget".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        for &b in &self.budgets {
            Budget::new(b)?;
        }
        Ok(())
    }
}

/// Mean and standard error across repeats of a per-run time average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let se = if samples.len() < 2 {
            0.0
        } else {
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        Estimate { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub budget: f64,
    pub agent: Agent,
    pub repeats: usize,
    /// Time-averaged distance between true belief and reconstruction.
    pub privacy: Estimate,
    /// Time-averaged score under the configured measure (for the randomized
    /// agent, the LP's expected score).
    pub score: Estimate,
    pub cost_increase: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub seed: u64,
    pub horizon: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, budget_index: usize, agent: Agent) -> Option<&SweepRow> {
        let agents = self.rows.iter().filter(|r| r.budget == self.rows[0].budget).count();
        self.rows[budget_index * agents..(budget_index + 1) * agents]
            .iter()
            .find(|r| r.agent == agent)
    }

    pub fn series(&self, agent: Agent) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.agent == agent).collect()
    }
}

fn time_average(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Runs `repeats` independent worlds and evaluates every budget on each of
/// them, so budgets are compared on common random numbers.
pub fn run_budget_sweep(scenario: &Scenario, config: &RunConfig, sweep: &SweepConfig) -> Result<SweepTable> {
    config.validate(scenario)?;
    sweep.validate()?;
    if config.observations.is_some() || config.beliefs.is_some() {
        return Err(Error::Config("a sweep simulates its own worlds; drop the replayed trace".into()));
    }
    let grid = simplex_grid(scenario.assets(), config.grid_resolution)?;
    let budgets: Vec<Budget> = sweep.budgets.iter().map(|&b| Budget::new(b)).collect::<Result<_>>()?;
    let runs = sweep
        .execution
        .map_range(sweep.repeats, |r| simulate_run(scenario, config, &grid, &budgets, r as u64));
    let runs: Vec<Vec<Vec<TimestepRecord>>> = runs.into_iter().collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (b, budget) in sweep.budgets.iter().enumerate() {
        for &agent in &config.agents {
            let mut privacy = Vec::with_capacity(sweep.repeats);
            let mut score = Vec::with_capacity(sweep.repeats);
            let mut increase = Vec::with_capacity(sweep.repeats);
            for run in &runs {
                let steps = run[b].iter().map(|rec| rec.agent(agent).expect("agent recorded"));
                privacy.push(time_average(steps.clone().map(|s| s.privacy)));
                score.push(time_average(steps.clone().map(|s| match &s.policy {
                    Some(p) => p.expected_score,
                    None => s.score,
                })));
                increase.push(time_average(steps.map(|s| s.cost_increase)));
            }
            rows.push(SweepRow {
                budget: *budget,
                agent,
                repeats: sweep.repeats,
                privacy: Estimate::from_samples(&privacy),
                score: Estimate::from_samples(&score),
                cost_increase: Estimate::from_samples(&increase),
            });
        }
    }
    Ok(SweepTable {
        seed: config.seed,
        horizon: config.horizon,
        rows,
    })
}
