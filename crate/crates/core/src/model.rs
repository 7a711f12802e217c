//! Domain types and cost arithmetic for the regime-switching mean-variance
//! allocation problem.
//!
//! Regimes are indexed from zero. The per-regime cost of an allocation `u` is
//! `γ uᵀΣᵢu − μᵢᵀu`, and an agent holding belief `π` pays the belief-weighted
//! average of those costs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;
const PSD_FLOOR: f64 = -1e-10;

/// Posterior probability vector over the hidden regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidBelief("empty probability vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidBelief(format!("entry {p} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidBelief(format!("entries sum to {sum}")));
        }
        Ok(Belief(probs))
    }

    /// Rescales a nonnegative vector onto the simplex. Accepts user input whose
    /// sum is within `1e-6` of one.
    pub fn normalized(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidBelief("entries must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidBelief(format!("entries sum to {sum}")));
        }
        Belief::new(probs.into_iter().map(|p| p / sum).collect())
    }

    pub fn uniform(dim: usize) -> Self {
        Belief(vec![1.0 / dim as f64; dim])
    }

    pub fn vertex(dim: usize, index: usize) -> Self {
        let mut probs = vec![0.0; dim];
        probs[index] = 1.0;
        Belief(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Renormalizes without validating the sum. Callers guarantee a positive,
    /// finite total.
    pub(crate) fn from_unnormalized(mut weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Belief(weights)
    }
}

impl TryFrom<Vec<f64>> for Belief {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Belief::normalized(v)
    }
}

impl From<Belief> for Vec<f64> {
    fn from(b: Belief) -> Self {
        b.0
    }
}

/// Capital allocation across assets. Feasibility is checked by the
/// operations that care about it.
#[derive(Debug, Clone, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(Vec<f64>);

impl Action {
    pub fn new(alloc: Vec<f64>) -> Result<Self> {
        if alloc.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("action entries must be finite".into()));
        }
        Ok(Action(alloc))
    }

    pub fn alloc(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub(crate) fn from_vec_unchecked(alloc: Vec<f64>) -> Self {
        Action(alloc)
    }

    /// Lexicographic comparison on the allocation vector.
    pub fn lex_cmp(&self, other: &Action) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

/// Return statistics of one market regime.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Regime {
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::InvalidScenario("regime with zero assets".into()));
        }
        let cov = matrix_from_rows(&cov, "regime covariance")?;
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::InvalidScenario(format!(
                "covariance is {}x{}, expected {n}x{n}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidScenario("non-finite regime entry".into()));
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidScenario(format!("covariance asymmetric by {asym}")));
        }
        let min_eig = cov.clone().symmetric_eigenvalues().min();
        if min_eig < PSD_FLOOR {
            return Err(Error::InvalidScenario(format!(
                "covariance has eigenvalue {min_eig} below zero"
            )));
        }
        Ok(Regime {
            mean: DVector::from_vec(mean),
            cov,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn assets(&self) -> usize {
        self.mean.len()
    }
}

/// Equality constraints `a_eq · u = b_eq`, plus `u ≥ 0` when `nonneg` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    nonneg: bool,
}

impl ConstraintSet {
    pub fn new(a_eq: Vec<Vec<f64>>, b_eq: Vec<f64>, nonneg: bool, assets: usize) -> Result<Self> {
        let a = if a_eq.is_empty() {
            DMatrix::zeros(0, assets)
        } else {
            matrix_from_rows(&a_eq, "constraints.a_eq")?
        };
        if a.ncols() != assets {
            return Err(Error::InvalidScenario(format!(
                "a_eq has {} columns, expected {assets}",
                a.ncols()
            )));
        }
        if a.nrows() != b_eq.len() {
            return Err(Error::InvalidScenario(format!(
                "a_eq has {} rows but b_eq has {} entries",
                a.nrows(),
                b_eq.len()
            )));
        }
        if a.iter().chain(&b_eq).any(|v| !v.is_finite()) {
            return Err(Error::InvalidScenario("non-finite constraint entry".into()));
        }
        if a.nrows() > 0 {
            let rank = a.clone().svd(false, false).rank(1e-10 * a.amax().max(1.0));
            if rank != a.nrows() {
                return Err(Error::InvalidScenario(format!(
                    "a_eq rows are linearly dependent (rank {rank} < {})",
                    a.nrows()
                )));
            }
        }
        Ok(ConstraintSet {
            a_eq: a,
            b_eq: DVector::from_vec(b_eq),
            nonneg,
        })
    }

    /// Fully invested, long-only: `1ᵀu = 1`, `u ≥ 0`.
    pub fn unit_simplex(assets: usize) -> Self {
        ConstraintSet {
            a_eq: DMatrix::from_element(1, assets, 1.0),
            b_eq: DVector::from_element(1, 1.0),
            nonneg: true,
        }
    }

    pub fn a_eq(&self) -> &DMatrix<f64> {
        &self.a_eq
    }

    pub fn b_eq(&self) -> &DVector<f64> {
        &self.b_eq
    }

    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn equalities(&self) -> usize {
        self.a_eq.nrows()
    }

    pub fn is_unit_simplex(&self) -> bool {
        self.nonneg
            && self.a_eq.nrows() == 1
            && self.a_eq.iter().all(|v| *v == 1.0)
            && self.b_eq[0] == 1.0
    }

    /// Max-norm violation of the constraint set at `u`.
    pub fn violation(&self, u: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.a_eq.nrows() {
            let lhs: f64 = (0..u.len()).map(|j| self.a_eq[(r, j)] * u[j]).sum();
            worst = worst.max((lhs - self.b_eq[r]).abs());
        }
        if self.nonneg {
            for v in u {
                worst = worst.max(-v);
            }
        }
        worst
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        u.len() == self.a_eq.ncols() && self.violation(u) <= tol
    }
}

/// Everything an agent and its adversary know about the market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFile", into = "ScenarioFile")]
pub struct Scenario {
    regimes: Vec<Regime>,
    gamma: f64,
    constraints: ConstraintSet,
    transition: DMatrix<f64>,
    obs_likelihood: DMatrix<f64>,
    rng_seed: u64,
}

impl Scenario {
    pub fn new(
        regimes: Vec<Regime>,
        gamma: f64,
        constraints: ConstraintSet,
        transition: DMatrix<f64>,
        obs_likelihood: DMatrix<f64>,
        rng_seed: u64,
    ) -> Result<Self> {
        let x = regimes.len();
        if x == 0 {
            return Err(Error::InvalidScenario("no regimes".into()));
        }
        let u = regimes[0].assets();
        if regimes.iter().any(|r| r.assets() != u) {
            return Err(Error::InvalidScenario("regimes disagree on asset count".into()));
        }
        if constraints.a_eq.ncols() != u {
            return Err(Error::InvalidScenario("constraint width differs from asset count".into()));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::InvalidScenario(format!("gamma {gamma} must be finite and nonnegative")));
        }
        check_stochastic(&transition, x, x, "transition")?;
        if obs_likelihood.ncols() == 0 {
            return Err(Error::InvalidScenario("observation alphabet is empty".into()));
        }
        check_stochastic(&obs_likelihood, x, obs_likelihood.ncols(), "obs_likelihood")?;
        Ok(Scenario {
            regimes,
            gamma,
            constraints,
            transition,
            obs_likelihood,
            rng_seed,
        })
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }

    pub fn regimes(&self) -> &[Regime] {
        &self.regimes
    }

    pub fn regime(&self, i: usize) -> Result<&Regime> {
        self.regimes.get(i).ok_or(Error::IndexOutOfRange {
            what: "regime",
            index: i,
            len: self.regimes.len(),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn obs_likelihood(&self) -> &DMatrix<f64> {
        &self.obs_likelihood
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Number of regimes.
    pub fn states(&self) -> usize {
        self.regimes.len()
    }

    /// Number of assets.
    pub fn assets(&self) -> usize {
        self.regimes[0].assets()
    }

    /// Size of the observation alphabet.
    pub fn symbols(&self) -> usize {
        self.obs_likelihood.ncols()
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Scenario { gamma, ..self.clone() }
    }

    fn check_action(&self, u: &Action) -> Result<()> {
        if u.dim() != self.assets() {
            return Err(Error::DimensionMismatch {
                context: "action",
                expected: self.assets(),
                actual: u.dim(),
            });
        }
        Ok(())
    }

    fn check_belief(&self, pi: &Belief) -> Result<()> {
        if pi.dim() != self.states() {
            return Err(Error::DimensionMismatch {
                context: "belief",
                expected: self.states(),
                actual: pi.dim(),
            });
        }
        Ok(())
    }

    /// `γ uᵀΣᵢu − μᵢᵀu`.
    pub fn state_cost(&self, i: usize, u: &Action) -> Result<f64> {
        let regime = self.regime(i)?;
        self.check_action(u)?;
        let u = u.alloc();
        let n = u.len();
        let mut quad = 0.0;
        for r in 0..n {
            let mut row = 0.0;
            for c in 0..n {
                row += regime.cov[(r, c)] * u[c];
            }
            quad += u[r] * row;
        }
        let lin: f64 = (0..n).map(|j| regime.mean[j] * u[j]).sum();
        Ok(self.gamma * quad - lin)
    }

    /// Belief-weighted average of the per-regime costs.
    pub fn expected_cost(&self, pi: &Belief, u: &Action) -> Result<f64> {
        self.check_belief(pi)?;
        let mut total = 0.0;
        for (i, p) in pi.probs().iter().enumerate() {
            total += p * self.state_cost(i, u)?;
        }
        Ok(total)
    }

    /// `2γΣᵢu − μᵢ`.
    pub fn cost_gradient(&self, i: usize, u: &Action) -> Result<Vec<f64>> {
        let regime = self.regime(i)?;
        self.check_action(u)?;
        let u = DVector::from_column_slice(u.alloc());
        let g = &regime.cov * &u * (2.0 * self.gamma) - &regime.mean;
        Ok(g.iter().copied().collect())
    }

    /// Belief-averaged covariance and mean.
    pub fn mixture_moments(&self, pi: &Belief) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.check_belief(pi)?;
        let n = self.assets();
        let mut cov = DMatrix::zeros(n, n);
        let mut mean = DVector::zeros(n);
        for (regime, p) in self.regimes.iter().zip(pi.probs()) {
            cov += &regime.cov * *p;
            mean += &regime.mean * *p;
        }
        Ok((cov, mean))
    }
}

fn check_stochastic(m: &DMatrix<f64>, rows: usize, cols: usize, name: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::InvalidScenario(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    for r in 0..rows {
        let row = m.row(r);
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidScenario(format!("{name} row {r} has a negative entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidScenario(format!("{name} row {r} sums to {sum}")));
        }
    }
    Ok(())
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidScenario(format!("{name} is ragged")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// On-disk JSON layout of a [`Scenario`]. Matrices are row-major arrays of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub regimes: Vec<RegimeFile>,
    pub gamma: f64,
    pub constraints: ConstraintFile,
    pub transition: Vec<Vec<f64>>,
    pub obs_likelihood: Vec<Vec<f64>>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeFile {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub nonneg: bool,
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = Error;

    fn try_from(file: ScenarioFile) -> Result<Self> {
        let regimes = file
            .regimes
            .into_iter()
            .map(|r| Regime::new(r.mean, r.cov))
            .collect::<Result<Vec<_>>>()?;
        let assets = regimes.first().map_or(0, Regime::assets);
        let constraints = ConstraintSet::new(
            file.constraints.a_eq,
            file.constraints.b_eq,
            file.constraints.nonneg,
            assets,
        )?;
        Scenario::new(
            regimes,
            file.gamma,
            constraints,
            matrix_from_rows(&file.transition, "transition")?,
            matrix_from_rows(&file.obs_likelihood, "obs_likelihood")?,
            file.rng_seed,
        )
    }
}

impl From<Scenario> for ScenarioFile {
    fn from(s: Scenario) -> Self {
        ScenarioFile {
            regimes: s
                .regimes
                .iter()
                .map(|r| RegimeFile {
                    mean: r.mean.iter().copied().collect(),
                    cov: matrix_to_rows(&r.cov),
                })
                .collect(),
            gamma: s.gamma,
            constraints: ConstraintFile {
                a_eq: matrix_to_rows(&s.constraints.a_eq),
                b_eq: s.constraints.b_eq.iter().copied().collect(),
                nonneg: s.constraints.nonneg,
            },
            transition: matrix_to_rows(&s.transition),
            obs_likelihood: matrix_to_rows(&s.obs_likelihood),
            rng_seed: s.rng_seed,
        }
    }
}
