//! Random regime-switching portfolio scenarios.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::model::{ConstraintSet, Regime, Scenario};
use crate::rng::stream;

/// Keystream reserved for scenario generation, disjoint from simulation runs.
const GENERATOR_STREAM: u64 = u64::MAX;
/// Diagonal loading that keeps every covariance positive definite.
pub const COVARIANCE_FLOOR: f64 = 0.01;
/// Probability of staying in the current regime beyond the uniform share.
pub const REGIME_PERSISTENCE: f64 = 0.9;

/// Draws a scenario with `states` regimes, `assets` assets and `symbols`
/// observation symbols. Identical arguments give a bit-identical scenario.
pub fn generate_scenario(seed: u64, states: usize, assets: usize, symbols: usize) -> Result<Scenario> {
    if states == 0 || assets == 0 || symbols == 0 {
        return Err(Error::Config(format!(
            "scenario dimensions must be positive (got X={states}, U={assets}, Y={symbols})"
        )));
    }
    let mut rng = stream(seed, GENERATOR_STREAM);
    let mean_dist = Uniform::new(-0.1, 0.5).expect("valid range");
    let regimes = (0..states)
        .map(|_| {
            let mean: Vec<f64> = (0..assets).map(|_| mean_dist.sample(&mut rng)).collect();
            let g: DMatrix<f64> = DMatrix::from_fn(assets, assets, |_, _| StandardNormal.sample(&mut rng));
            let cov = &g * g.transpose() / assets as f64 + DMatrix::identity(assets, assets) * COVARIANCE_FLOOR;
            let rows = (0..assets)
                .map(|r| (0..assets).map(|c| 0.5 * (cov[(r, c)] + cov[(c, r)])).collect())
                .collect();
            Regime::new(mean, rows)
        })
        .collect::<Result<Vec<_>>>()?;

    let transition = DMatrix::from_fn(states, states, |r, c| {
        let stay = if r == c { REGIME_PERSISTENCE } else { 0.0 };
        stay + (1.0 - REGIME_PERSISTENCE) / states as f64
    });
    let obs_likelihood = if symbols == 1 {
        DMatrix::from_element(states, 1, 1.0)
    } else {
        // Normalized unit exponentials are Dirichlet(1, …, 1) draws.
        let mut m = DMatrix::zeros(states, symbols);
        for r in 0..states {
            let row: Vec<f64> = (0..symbols).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = row.iter().sum();
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = v / total;
            }
        }
        m
    };
    Scenario::new(
        regimes,
        1.0,
        ConstraintSet::unit_simplex(assets),
        transition,
        obs_likelihood,
        seed,
    )
}

/// Uniformly random regime index, used for the initial world state.
pub(crate) fn uniform_regime(states: usize, rng: &mut impl Rng) -> usize {
    rng.random_range(0..states)
}
