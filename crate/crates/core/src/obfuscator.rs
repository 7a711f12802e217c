//! The three decision makers: the cost-optimal forward allocation, the
//! deterministic budgeted obfuscator, and the randomized obfuscator that
//! mixes candidate actions under an average budget.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, PolicyInfeasibility, Result};
use crate::exec::Execution;
use crate::model::{Action, Belief, Scenario};
use crate::privacy::{evaluate, PrivacyMeasure, PrivacyValue};
use crate::solvers::{solve_lp, solve_qp, Constraints, LinearProgram, QuadraticProgram};

/// Largest grid [`simplex_grid`] will materialize.
pub const MAX_GRID_POINTS: u128 = 10_000_000;
/// Candidates must satisfy the allocation constraints to this tolerance.
pub const ADMISSIBLE_TOL: f64 = 1e-9;
/// Masses at or below this are treated as zero when counting support.
pub const SUPPORT_TOL: f64 = 1e-9;

/// Fractional extra cost the agent tolerates over the optimal cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Budget(f64);

impl Budget {
    pub fn new(c_b: f64) -> Result<Self> {
        if !(c_b >= 0.0) || !c_b.is_finite() {
            return Err(Error::Config(format!("budget must be finite and nonnegative, got {c_b}")));
        }
        Ok(Budget(c_b))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `c* + c_b·|c*|`, which relaxes the bound whatever the sign of `c*`.
    pub fn cap(self, optimal_cost: f64) -> f64 {
        optimal_cost + self.0 * optimal_cost.abs()
    }
}

/// Regular lattice on the unit simplex, lexicographically sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    points: Vec<Action>,
    resolution: usize,
}

impl ActionGrid {
    pub fn points(&self) -> &[Action] {
        &self.points
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// All points `(k₁/N, …, k_U/N)` with nonnegative integers summing to `N`.
pub fn simplex_grid(assets: usize, resolution: usize) -> Result<ActionGrid> {
    if assets == 0 || resolution == 0 {
        return Err(Error::Config(format!(
            "grid needs at least one asset and resolution ≥ 1 (got {assets}, {resolution})"
        )));
    }
    let count = binomial((resolution + assets - 1) as u128, (assets - 1) as u128);
    if count > MAX_GRID_POINTS {
        return Err(Error::GridTooLarge {
            count,
            limit: MAX_GRID_POINTS,
        });
    }
    let mut points = Vec::with_capacity(count as usize);
    let mut parts = vec![0usize; assets];
    fn fill(parts: &mut Vec<usize>, pos: usize, remaining: usize, n: usize, out: &mut Vec<Action>) {
        if pos + 1 == parts.len() {
            parts[pos] = remaining;
            let alloc = parts.iter().map(|&k| k as f64 / n as f64).collect();
            out.push(Action::from_vec_unchecked(alloc));
            return;
        }
        for k in 0..=remaining {
            parts[pos] = k;
            fill(parts, pos + 1, remaining - k, n, out);
        }
    }
    fill(&mut parts, 0, resolution, resolution, &mut points);
    Ok(ActionGrid { points, resolution })
}

/// A priced, scored action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub action: Action,
    /// Expected cost under the true belief.
    pub cost: f64,
    pub privacy: PrivacyValue,
}

/// Optimal forward allocation with its KKT multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub action: Action,
    pub cost: f64,
    /// Bound multipliers, one per asset (zero when bounds are absent).
    pub lambda: Vec<f64>,
    /// Equality multipliers, one per constraint row.
    pub nu: Vec<f64>,
    /// Max-norm stationarity residual of the returned point.
    pub kkt_residual: f64,
}

impl ForwardSolution {
    pub fn decision(&self, privacy: PrivacyValue) -> Decision {
        Decision {
            action: self.action.clone(),
            cost: self.cost,
            privacy,
        }
    }
}

/// Minimizes the belief-weighted mean-variance cost over the allocation set.
pub fn solve_odm(scenario: &Scenario, pi: &Belief) -> Result<ForwardSolution> {
    let (cov, mean) = scenario.mixture_moments(pi)?;
    let n = scenario.assets();
    let cs = scenario.constraints();
    let bounds = vec![cs.nonneg().then_some(0.0); n];
    let constraints = Constraints::nonnegative(n)
        .equalities(cs.a_eq().clone(), cs.b_eq().clone())?
        .lower_bounds(bounds)?;
    let q = &cov * (2.0 * scenario.gamma());
    let q = (&q + q.transpose()) * 0.5;
    let qp = QuadraticProgram::new(q.clone(), -&mean, constraints)?;
    let sol = solve_qp(&qp).optimal("forward allocation")?;
    let duals = sol.duals.ok_or(Error::Solver {
        context: "forward allocation multipliers",
        status: crate::solvers::StatusKind::IterationLimit,
    })?;
    let action = Action::new(sol.x)?;
    let u = DVector::from_column_slice(action.alloc());
    let lambda = if cs.nonneg() { duals.lower } else { vec![0.0; n] };
    let grad = &q * &u - &mean + cs.a_eq().transpose() * DVector::from_column_slice(&duals.eq)
        - DVector::from_column_slice(&lambda);
    let cost = scenario.expected_cost(pi, &action)?;
    Ok(ForwardSolution {
        action,
        cost,
        lambda,
        nu: duals.eq,
        kkt_residual: grad.amax(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObfuscatorOptions {
    /// Adds the forward-optimal action to the candidate set, so a zero
    /// budget always has an affordable candidate.
    pub include_odm_anchor: bool,
    /// Local pattern search around the best grid point (deterministic
    /// obfuscator only, unit-simplex allocations only).
    pub refine: bool,
    pub execution: Execution,
}

impl Default for ObfuscatorOptions {
    fn default() -> Self {
        ObfuscatorOptions {
            include_odm_anchor: true,
            refine: false,
            execution: Execution::default(),
        }
    }
}

/// Candidate actions with cost and privacy, shared by both obfuscators.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidates {
    pub actions: Vec<Action>,
    pub costs: Vec<f64>,
    /// `None` for candidates outside the constraint set or above the
    /// scoring cost limit; those are never selected.
    pub privacy: Vec<Option<PrivacyValue>>,
    /// Whether each candidate satisfies the allocation constraints.
    pub admissible: Vec<bool>,
    /// Index of the forward-optimal anchor, if included.
    pub anchor: Option<usize>,
    pub optimal_cost: f64,
    /// Resolution of the grid the candidates came from.
    pub resolution: usize,
}

impl ScoredCandidates {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn eligible(&self, cap: f64) -> impl Iterator<Item = (usize, PrivacyValue)> + '_ {
        (0..self.len()).filter_map(move |l| match self.privacy[l] {
            Some(v) if self.costs[l] <= cap => Some((l, v)),
            _ => None,
        })
    }
}

/// Prices every candidate and scores the ones with cost at most
/// `score_limit` (all of them when `None`).
pub fn score_candidates(
    scenario: &Scenario,
    pi: &Belief,
    measure: &PrivacyMeasure,
    grid: &ActionGrid,
    forward: &ForwardSolution,
    score_limit: Option<f64>,
    options: &ObfuscatorOptions,
) -> Result<ScoredCandidates> {
    if grid.is_empty() {
        return Err(Error::Config("action grid is empty".into()));
    }
    if grid.points[0].dim() != scenario.assets() {
        return Err(Error::DimensionMismatch {
            context: "action grid",
            expected: scenario.assets(),
            actual: grid.points[0].dim(),
        });
    }
    let mut actions = grid.points.clone();
    let anchor = options.include_odm_anchor.then(|| {
        actions.push(forward.action.clone());
        actions.len() - 1
    });
    let results: Vec<Result<(f64, bool, Option<PrivacyValue>)>> = options.execution.map(&actions, |u| {
        let cost = scenario.expected_cost(pi, u)?;
        let admissible = scenario.constraints().contains(u.alloc(), ADMISSIBLE_TOL);
        let within = score_limit.is_none_or(|limit| cost <= limit);
        let privacy = if admissible && within {
            Some(evaluate(measure, scenario, u, pi)?)
        } else {
            None
        };
        Ok((cost, admissible, privacy))
    });
    let mut costs = Vec::with_capacity(actions.len());
    let mut privacy = Vec::with_capacity(actions.len());
    let mut admissible = Vec::with_capacity(actions.len());
    for r in results {
        let (c, a, p) = r?;
        costs.push(c);
        admissible.push(a);
        privacy.push(p);
    }
    if let Some(a) = anchor {
        // The anchor's cost must equal the optimum bit for bit.
        costs[a] = forward.cost;
    }
    Ok(ScoredCandidates {
        actions,
        costs,
        privacy,
        admissible,
        anchor,
        optimal_cost: forward.cost,
        resolution: grid.resolution,
    })
}

fn better(a: (PrivacyValue, f64, &Action), b: (PrivacyValue, f64, &Action)) -> bool {
    match a.0.value().partial_cmp(&b.0.value()).unwrap_or(Ordering::Equal) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a.2.lex_cmp(b.2) == Ordering::Less,
        },
    }
}

/// Index of the best affordable candidate, or `None` when every affordable
/// candidate scores negative infinity.
pub fn best_candidate(scored: &ScoredCandidates, cap: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (l, v) in scored.eligible(cap) {
        if v.is_neg_inf() {
            continue;
        }
        let replace = match best {
            None => true,
            Some(b) => better(
                (v, scored.costs[l], &scored.actions[l]),
                (scored.privacy[b].unwrap(), scored.costs[b], &scored.actions[b]),
            ),
        };
        if replace {
            best = Some(l);
        }
    }
    best
}

/// Deterministic obfuscation from pre-scored candidates. Falls back to the
/// forward action when nothing affordable has finite-or-better privacy.
pub fn cdm_from_scores(
    scenario: &Scenario,
    pi: &Belief,
    measure: &PrivacyMeasure,
    scored: &ScoredCandidates,
    forward: &ForwardSolution,
    cap: f64,
    options: &ObfuscatorOptions,
) -> Result<Decision> {
    let Some(l) = best_candidate(scored, cap) else {
        let privacy = match scored.anchor.and_then(|a| scored.privacy[a]) {
            Some(v) => v,
            None => evaluate(measure, scenario, &forward.action, pi)?,
        };
        return Ok(forward.decision(privacy));
    };
    let start = Decision {
        action: scored.actions[l].clone(),
        cost: scored.costs[l],
        privacy: scored.privacy[l].unwrap(),
    };
    if options.refine && scenario.constraints().is_unit_simplex() && start.privacy.is_finite() {
        // Start from one grid cell and shrink.
        return refine(scenario, pi, measure, start, cap, 1.0 / scored.resolution as f64);
    }
    Ok(start)
}

/// Compass search along the edge directions `e_i − e_j` of the simplex,
/// accepting only moves that stay affordable and strictly improve privacy.
fn refine(
    scenario: &Scenario,
    pi: &Belief,
    measure: &PrivacyMeasure,
    mut best: Decision,
    cap: f64,
    mut step: f64,
) -> Result<Decision> {
    let n = best.action.dim();
    let mut evaluations = 0;
    while step > 1e-4 && evaluations < 400 {
        let mut improved = false;
        'moves: for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut alloc = best.action.alloc().to_vec();
                let delta = step.min(alloc[j]);
                if delta <= 0.0 {
                    continue;
                }
                alloc[i] += delta;
                alloc[j] -= delta;
                let u = Action::new(alloc)?;
                let cost = scenario.expected_cost(pi, &u)?;
                if cost > cap {
                    continue;
                }
                evaluations += 1;
                let privacy = evaluate(measure, scenario, &u, pi)?;
                if privacy.value() > best.privacy.value() {
                    best = Decision {
                        action: u,
                        cost,
                        privacy,
                    };
                    improved = true;
                    break 'moves;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best)
}

/// Deterministic obfuscation under a hard cost cap.
pub fn solve_cdm(
    scenario: &Scenario,
    pi: &Belief,
    measure: &PrivacyMeasure,
    budget: Budget,
    grid: &ActionGrid,
    options: &ObfuscatorOptions,
) -> Result<Decision> {
    let forward = solve_odm(scenario, pi)?;
    let cap = budget.cap(forward.cost);
    let scored = score_candidates(scenario, pi, measure, grid, &forward, Some(cap), options)?;
    cdm_from_scores(scenario, pi, measure, &scored, &forward, cap, options)
}

/// Probability mass over candidate actions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObfuscationPolicy {
    pub candidates: Vec<Action>,
    pub costs: Vec<f64>,
    /// Privacy of each candidate; `None` where the candidate was excluded.
    pub privacy: Vec<Option<PrivacyValue>>,
    pub mass: Vec<f64>,
    pub cap: f64,
    /// Optimal value of the mixing LP.
    pub expected_privacy: PrivacyValue,
    pub expected_cost: f64,
    /// Strictly positive masses reported by the LP before any support reduction.
    pub raw_support: usize,
}

impl ObfuscationPolicy {
    /// Indices with mass above [`SUPPORT_TOL`].
    pub fn support(&self) -> Vec<usize> {
        (0..self.mass.len()).filter(|&l| self.mass[l] > SUPPORT_TOL).collect()
    }
}

/// Moves mass along null directions of `[1; c]` until at most two
/// candidates carry mass, never lowering expected privacy.
fn reduce_support(mass: &mut [f64], costs: &[f64], scores: &[f64]) {
    loop {
        let support: Vec<usize> = (0..mass.len()).filter(|&l| mass[l] > SUPPORT_TOL).collect();
        if support.len() <= 2 {
            return;
        }
        let idx = [support[0], support[1], support[2]];
        let c = idx.map(|l| costs[l]);
        // Cross product of (1,1,1) and c is orthogonal to both rows.
        let mut d = [c[2] - c[1], c[0] - c[2], c[1] - c[0]];
        if d.iter().all(|v| *v == 0.0) {
            d = [1.0, -1.0, 0.0];
        }
        let gain: f64 = (0..3).map(|t| d[t] * scores[idx[t]]).sum();
        if gain < 0.0 {
            d = d.map(|v| -v);
        }
        let step = (0..3)
            .filter(|&t| d[t] < 0.0)
            .map(|t| mass[idx[t]] / -d[t])
            .fold(f64::INFINITY, f64::min);
        for t in 0..3 {
            mass[idx[t]] += step * d[t];
        }
        let hit = (0..3)
            .filter(|&t| d[t] < 0.0)
            .min_by(|&a, &b| mass[idx[a]].partial_cmp(&mass[idx[b]]).unwrap())
            .unwrap();
        mass[idx[hit]] = 0.0;
        for t in 0..3 {
            mass[idx[t]] = mass[idx[t]].max(0.0);
        }
    }
}

fn cheapest(scored: &ScoredCandidates, indices: impl Iterator<Item = usize>) -> Option<usize> {
    indices.min_by(|&a, &b| {
        scored.costs[a]
            .partial_cmp(&scored.costs[b])
            .unwrap_or(Ordering::Equal)
            .then_with(|| scored.actions[a].lex_cmp(&scored.actions[b]))
    })
}

/// Randomized obfuscation from pre-scored candidates.
pub fn pdm_from_scores(scored: &ScoredCandidates, cap: f64) -> Result<ObfuscationPolicy> {
    let m = scored.len();
    let allowed: Vec<usize> = (0..m)
        .filter(|&l| matches!(scored.privacy[l], Some(v) if !v.is_neg_inf()))
        .collect();
    if allowed.is_empty() {
        // Admissible candidates left unscored were cut by cost, so the cap
        // is what binds.
        let unscored = (0..m).filter(|&l| scored.admissible[l] && scored.privacy[l].is_none());
        if let Some(c) = cheapest(scored, unscored) {
            return Err(Error::PolicyInfeasible(PolicyInfeasibility::CapBelowCheapest {
                cheapest: scored.costs[c],
                cap,
            }));
        }
        return Err(Error::PolicyInfeasible(PolicyInfeasibility::AllCandidatesExcluded));
    }
    let low = cheapest(scored, allowed.iter().copied()).unwrap();
    if scored.costs[low] > cap {
        return Err(Error::PolicyInfeasible(PolicyInfeasibility::CapBelowCheapest {
            cheapest: scored.costs[low],
            cap,
        }));
    }

    let mut mass = vec![0.0; m];
    let infinite: Vec<usize> = allowed
        .iter()
        .copied()
        .filter(|&l| scored.privacy[l].unwrap().value() == f64::INFINITY)
        .collect();
    let raw_support;
    let expected_privacy;
    if let Some(top) = cheapest(scored, infinite.into_iter()) {
        // Any mass on an unbounded score makes the objective infinite; put
        // as much there as the budget allows.
        if scored.costs[top] <= cap {
            mass[top] = 1.0;
        } else {
            let t = (cap - scored.costs[low]) / (scored.costs[top] - scored.costs[low]);
            mass[top] = t;
            mass[low] = 1.0 - t;
        }
        raw_support = mass.iter().filter(|v| **v > SUPPORT_TOL).count();
        expected_privacy = PrivacyValue::POS_INF;
    } else {
        let k = allowed.len();
        let scores: Vec<f64> = allowed.iter().map(|&l| scored.privacy[l].unwrap().value()).collect();
        let costs: Vec<f64> = allowed.iter().map(|&l| scored.costs[l]).collect();
        let constraints = Constraints::nonnegative(k)
            .equalities(DMatrix::from_element(1, k, 1.0), DVector::from_element(1, 1.0))?
            .inequalities(DMatrix::from_row_slice(1, k, &costs), DVector::from_element(1, cap))?;
        let objective = DVector::from_iterator(k, scores.iter().map(|s| -s));
        let sol = solve_lp(&LinearProgram::new(objective, constraints)?).optimal("randomized policy")?;
        let mut p: Vec<f64> = sol.x.iter().map(|v| v.max(0.0)).collect();
        raw_support = p.iter().filter(|v| **v > SUPPORT_TOL).count();
        reduce_support(&mut p, &costs, &scores);
        for v in p.iter_mut() {
            if *v <= SUPPORT_TOL {
                *v = 0.0;
            }
        }
        let total: f64 = p.iter().sum();
        for (slot, v) in allowed.iter().zip(&p) {
            mass[*slot] = v / total;
        }
        expected_privacy = PrivacyValue(allowed.iter().map(|&l| mass[l] * scored.privacy[l].unwrap().value()).sum());
    }
    let expected_cost = (0..m).filter(|&l| mass[l] > 0.0).map(|l| mass[l] * scored.costs[l]).sum();
    Ok(ObfuscationPolicy {
        candidates: scored.actions.clone(),
        costs: scored.costs.clone(),
        privacy: scored.privacy.clone(),
        mass,
        cap,
        expected_privacy,
        expected_cost,
        raw_support,
    })
}

/// Randomized obfuscation under an average cost cap.
pub fn solve_pdm(
    scenario: &Scenario,
    pi: &Belief,
    measure: &PrivacyMeasure,
    budget: Budget,
    grid: &ActionGrid,
    options: &ObfuscatorOptions,
) -> Result<ObfuscationPolicy> {
    let forward = solve_odm(scenario, pi)?;
    let cap = budget.cap(forward.cost);
    let scored = score_candidates(scenario, pi, measure, grid, &forward, None, options)?;
    pdm_from_scores(&scored, cap)
}

/// Draws one candidate according to the policy's mass.
pub fn sample_action(policy: &ObfuscationPolicy, rng: &mut impl Rng) -> Decision {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for (l, &p) in policy.mass.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        chosen = Some(l);
        acc += p;
        if r < acc {
            break;
        }
    }
    let l = chosen.expect("policy mass sums to one");
    Decision {
        action: policy.candidates[l].clone(),
        cost: policy.costs[l],
        privacy: policy.privacy[l].expect("positive mass implies a scored candidate"),
    }
}
