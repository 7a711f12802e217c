//! Regime-switching world simulation and exact discrete belief filtering.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Belief, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub regime: usize,
    pub time: usize,
}

impl WorldState {
    pub fn new(scenario: &Scenario, regime: usize) -> Result<Self> {
        if regime >= scenario.states() {
            return Err(Error::IndexOutOfRange {
                what: "regime",
                index: regime,
                len: scenario.states(),
            });
        }
        Ok(WorldState { regime, time: 0 })
    }
}

/// Per-step observation symbols, zero-based. Serializes as a plain JSON array.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationTrace(pub Vec<usize>);

impl ObservationTrace {
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        match self.0.iter().find(|&&y| y >= scenario.symbols()) {
            Some(&y) => Err(Error::IndexOutOfRange {
                what: "observation",
                index: y,
                len: scenario.symbols(),
            }),
            None => Ok(()),
        }
    }
}

fn draw_categorical(weights: impl Iterator<Item = f64>, rng: &mut impl Rng) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if r < acc {
            return i;
        }
    }
    // Row sums fall short of one by round-off only.
    last_positive
}

/// Advances the hidden regime one step and emits an observation of the new regime.
pub fn simulate_step(scenario: &Scenario, state: WorldState, rng: &mut impl Rng) -> Result<(WorldState, usize)> {
    if state.regime >= scenario.states() {
        return Err(Error::IndexOutOfRange {
            what: "regime",
            index: state.regime,
            len: scenario.states(),
        });
    }
    let next = draw_categorical(scenario.transition().row(state.regime).iter().copied(), rng);
    let obs = draw_categorical(scenario.obs_likelihood().row(next).iter().copied(), rng);
    Ok((
        WorldState {
            regime: next,
            time: state.time + 1,
        },
        obs,
    ))
}

/// One predict-correct step of the HMM filter.
pub fn filter_update(scenario: &Scenario, prior: &Belief, observation: usize) -> Result<Belief> {
    let x = scenario.states();
    if prior.dim() != x {
        return Err(Error::DimensionMismatch {
            context: "prior belief",
            expected: x,
            actual: prior.dim(),
        });
    }
    if observation >= scenario.symbols() {
        return Err(Error::IndexOutOfRange {
            what: "observation",
            index: observation,
            len: scenario.symbols(),
        });
    }
    let t = scenario.transition();
    let lik = scenario.obs_likelihood();
    let weights: Vec<f64> = (0..x)
        .map(|j| {
            let predicted: f64 = (0..x).map(|i| t[(i, j)] * prior.probs()[i]).sum();
            lik[(j, observation)] * predicted
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ImpossibleObservation { observation });
    }
    Ok(Belief::from_unnormalized(weights))
}

/// Runs [`filter_update`] over a whole trace, returning one belief per step.
pub fn filter_trace(scenario: &Scenario, prior: &Belief, trace: &ObservationTrace) -> Result<Vec<Belief>> {
    let mut out = Vec::with_capacity(trace.0.len());
    let mut belief = prior.clone();
    for &y in &trace.0 {
        belief = filter_update(scenario, &belief, y)?;
        out.push(belief.clone());
    }
    Ok(out)
}
