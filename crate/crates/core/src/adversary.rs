//! Inverse optimization: the set of beliefs that rationalize an observed action.
//!
//! For a convex cost and affine constraints, an allocation `u` is optimal
//! under belief `π` exactly when the KKT system
//!
//! ```text
//! Σᵢ πᵢ ∇c(i, u) − λ + A_eqᵀ ν = 0,   1ᵀπ = 1,   π ≥ 0,   λ ≥ 0,
//! λⱼ = 0 wherever uⱼ ≠ 0
//! ```
//!
//! has a solution in `(λ, ν)`. [`BeliefPolytope`] stores that linear system
//! over the stacked variables `(π, λ, ν)`; its projection onto `π` is the set
//! the adversary can reconstruct. Queries run the LP and QP engines directly
//! on the stacked system, so the projection is never formed explicitly.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{matrix_to_rows, Action, Belief, Scenario};
use crate::solvers::{
    feasible_within, solve_lp, solve_qp, Constraints, LinearProgram, QuadraticProgram, SolveStatus,
    INFEASIBILITY_TOL,
};

/// `|uⱼ| ≤ ACTIVITY_TOL` treats component `j` as zero.
pub const ACTIVITY_TOL: f64 = 1e-7;
/// Phase-one tolerance for membership of a fixed belief.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Coordinate spread at or below which the set counts as one point.
pub const SINGLETON_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefPolytope {
    x_dim: usize,
    lambda_dim: usize,
    nu_dim: usize,
    active_set: Vec<bool>,
    /// `U × (X + U + E)`: gradient columns, `−I` on λ, `A_eqᵀ` on ν.
    stationarity: DMatrix<f64>,
}

/// JSON dump of a polytope for debugging.
#[derive(Debug, Clone, Serialize)]
pub struct PolytopeDump {
    pub x_dim: usize,
    pub lambda_dim: usize,
    pub nu_dim: usize,
    pub variable_order: [&'static str; 3],
    pub active_set: Vec<bool>,
    pub stationarity_matrix: Vec<Vec<f64>>,
    pub stationarity_rhs: Vec<f64>,
    pub simplex_row: Vec<f64>,
    pub simplex_rhs: f64,
    pub nonneg_vars: Vec<usize>,
    pub zero_vars: Vec<usize>,
}

pub fn build_polytope(scenario: &Scenario, u: &Action) -> Result<BeliefPolytope> {
    let x = scenario.states();
    let n = scenario.assets();
    let e = scenario.constraints().equalities();
    if u.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "action",
            expected: n,
            actual: u.dim(),
        });
    }
    let nonneg = scenario.constraints().nonneg();
    let active_set: Vec<bool> = u.alloc().iter().map(|v| nonneg && v.abs() <= ACTIVITY_TOL).collect();

    let mut stationarity = DMatrix::zeros(n, x + n + e);
    for i in 0..x {
        let g = scenario.cost_gradient(i, u)?;
        for (r, gr) in g.iter().enumerate() {
            stationarity[(r, i)] = *gr;
        }
    }
    for j in 0..n {
        stationarity[(j, x + j)] = -1.0;
    }
    let a = scenario.constraints().a_eq();
    for r in 0..e {
        for j in 0..n {
            stationarity[(j, x + n + r)] = a[(r, j)];
        }
    }
    Ok(BeliefPolytope {
        x_dim: x,
        lambda_dim: n,
        nu_dim: e,
        active_set,
        stationarity,
    })
}

impl BeliefPolytope {
    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn active_set(&self) -> &[bool] {
        &self.active_set
    }

    pub fn stationarity_matrix(&self) -> &DMatrix<f64> {
        &self.stationarity
    }

    /// Copy of this polytope with a different activity pattern.
    pub fn with_active_set(&self, active_set: Vec<bool>) -> Result<Self> {
        if active_set.len() != self.lambda_dim {
            return Err(Error::DimensionMismatch {
                context: "active set",
                expected: self.lambda_dim,
                actual: active_set.len(),
            });
        }
        Ok(BeliefPolytope {
            active_set,
            ..self.clone()
        })
    }

    fn active_lambdas(&self) -> Vec<usize> {
        (0..self.lambda_dim).filter(|&j| self.active_set[j]).collect()
    }

    /// Free-variable columns kept in the reduced system: π, active λ, ν.
    fn reduced_columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = (0..self.x_dim).collect();
        cols.extend(self.active_lambdas().into_iter().map(|j| self.x_dim + j));
        cols.extend((0..self.nu_dim).map(|r| self.x_dim + self.lambda_dim + r));
        cols
    }

    /// Linear system over `(π, λ_active, ν)`.
    fn system(&self) -> Constraints {
        let cols = self.reduced_columns();
        let nvars = cols.len();
        let u = self.lambda_dim;
        let mut a = DMatrix::zeros(u + 1, nvars);
        for (k, &c) in cols.iter().enumerate() {
            for r in 0..u {
                a[(r, k)] = self.stationarity[(r, c)];
            }
        }
        for k in 0..self.x_dim {
            a[(u, k)] = 1.0;
        }
        let mut b = DVector::zeros(u + 1);
        b[u] = 1.0;
        let nu_start = nvars - self.nu_dim;
        let bounds = (0..nvars).map(|k| if k < nu_start { Some(0.0) } else { None }).collect();
        Constraints::nonnegative(nvars)
            .equalities(a, b)
            .and_then(|c| c.lower_bounds(bounds))
            .expect("polytope system dimensions are consistent by construction")
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(!feasible_within(&self.system(), INFEASIBILITY_TOL)?)
    }

    /// True iff some `(λ, ν)` completes `pi` to a point of the system.
    pub fn contains(&self, pi: &Belief) -> Result<bool> {
        if pi.dim() != self.x_dim {
            return Err(Error::DimensionMismatch {
                context: "belief",
                expected: self.x_dim,
                actual: pi.dim(),
            });
        }
        let active = self.active_lambdas();
        let nvars = active.len() + self.nu_dim;
        let u = self.lambda_dim;
        let mut a = DMatrix::zeros(u, nvars);
        let mut b = DVector::zeros(u);
        for r in 0..u {
            b[r] = -(0..self.x_dim).map(|i| self.stationarity[(r, i)] * pi.probs()[i]).sum::<f64>();
            for (k, &j) in active.iter().enumerate() {
                a[(r, k)] = self.stationarity[(r, self.x_dim + j)];
            }
            for e in 0..self.nu_dim {
                a[(r, active.len() + e)] = self.stationarity[(r, self.x_dim + u + e)];
            }
        }
        let bounds = (0..nvars).map(|k| if k < active.len() { Some(0.0) } else { None }).collect();
        let cons = Constraints::nonnegative(nvars)
            .equalities(a, b)?
            .lower_bounds(bounds)?;
        feasible_within(&cons, MEMBERSHIP_TOL)
    }

    /// Minimizer of `directionᵀπ` over the set.
    pub fn extreme_point(&self, direction: &[f64]) -> Result<Vec<f64>> {
        let cons = self.system();
        let mut c = DVector::zeros(cons.vars());
        for (i, d) in direction.iter().enumerate().take(self.x_dim) {
            c[i] = *d;
        }
        match solve_lp(&LinearProgram::new(c, cons)?) {
            SolveStatus::Optimal(sol) => Ok(sol.x[..self.x_dim].to_vec()),
            SolveStatus::Infeasible => Err(Error::EmptyPolytope),
            other => Err(Error::Solver {
                context: "polytope extreme point",
                status: other.kind(),
            }),
        }
    }

    /// LP minimum and maximum of coordinate `i` over the set.
    pub fn coordinate_range(&self, i: usize) -> Result<(f64, f64)> {
        if i >= self.x_dim {
            return Err(Error::IndexOutOfRange {
                what: "belief coordinate",
                index: i,
                len: self.x_dim,
            });
        }
        let mut dir = vec![0.0; self.x_dim];
        dir[i] = 1.0;
        let min = self.extreme_point(&dir)?[i];
        dir[i] = -1.0;
        let max = self.extreme_point(&dir)?[i];
        Ok((min, max.max(min)))
    }

    pub fn coordinate_ranges(&self) -> Result<Vec<(f64, f64)>> {
        (0..self.x_dim).map(|i| self.coordinate_range(i)).collect()
    }

    pub fn is_singleton(&self) -> Result<bool> {
        Ok(self
            .coordinate_ranges()?
            .iter()
            .all(|(lo, hi)| hi - lo <= SINGLETON_TOL))
    }

    /// Euclidean projection of `reference` onto the set, with its distance.
    pub fn nearest(&self, reference: &Belief) -> Result<(f64, Vec<f64>)> {
        if reference.dim() != self.x_dim {
            return Err(Error::DimensionMismatch {
                context: "reference belief",
                expected: self.x_dim,
                actual: reference.dim(),
            });
        }
        let cons = self.system();
        let n = cons.vars();
        let mut qm = DMatrix::zeros(n, n);
        let mut qv = DVector::zeros(n);
        for i in 0..self.x_dim {
            qm[(i, i)] = 2.0;
            qv[i] = -2.0 * reference.probs()[i];
        }
        match solve_qp(&QuadraticProgram::new(qm, qv, cons)?) {
            SolveStatus::Optimal(sol) => {
                let point = sol.x[..self.x_dim].to_vec();
                let dist = point
                    .iter()
                    .zip(reference.probs())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                Ok((dist, point))
            }
            SolveStatus::Infeasible => Err(Error::EmptyPolytope),
            other => Err(Error::Solver {
                context: "belief-set distance",
                status: other.kind(),
            }),
        }
    }

    /// `min ‖π − reference‖₂` over the set; an error when the set is empty.
    pub fn distance(&self, reference: &Belief) -> Result<f64> {
        self.nearest(reference).map(|(d, _)| d)
    }

    pub fn dump(&self) -> PolytopeDump {
        let total = self.x_dim + self.lambda_dim + self.nu_dim;
        let mut simplex_row = vec![0.0; total];
        simplex_row[..self.x_dim].iter_mut().for_each(|v| *v = 1.0);
        let nonneg_vars = (0..self.x_dim + self.lambda_dim).collect();
        let zero_vars = (0..self.lambda_dim)
            .filter(|&j| !self.active_set[j])
            .map(|j| self.x_dim + j)
            .collect();
        PolytopeDump {
            x_dim: self.x_dim,
            lambda_dim: self.lambda_dim,
            nu_dim: self.nu_dim,
            variable_order: ["pi", "lambda", "nu"],
            active_set: self.active_set.clone(),
            stationarity_matrix: matrix_to_rows(&self.stationarity),
            stationarity_rhs: vec![0.0; self.lambda_dim],
            simplex_row,
            simplex_rhs: 1.0,
            nonneg_vars,
            zero_vars,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.dump()).expect("polytope dump serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::{one_regime, random_scenario, random_simplex_point};
    use crate::model::{ConstraintSet, Regime};
    use crate::obfuscator::solve_odm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn act(v: &[f64]) -> Action {
        Action::new(v.to_vec()).unwrap()
    }

    fn linear_scenario(means: &[[f64; 3]]) -> Scenario {
        let x = means.len();
        let regimes = means
            .iter()
            .map(|m| Regime::new(m.to_vec(), vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap())
            .collect();
        Scenario::new(
            regimes,
            0.0,
            ConstraintSet::unit_simplex(3),
            DMatrix::identity(x, x),
            DMatrix::from_element(x, 1, 1.0),
            0,
        )
        .unwrap()
    }

    fn simplex_grid_beliefs(step: f64) -> Vec<Belief> {
        let n = (1.0 / step).round() as usize;
        let mut out = Vec::new();
        for a in 0..=n {
            for b in 0..=(n - a) {
                let c = n - a - b;
                out.push(Belief::normalized(vec![a as f64 / n as f64, b as f64 / n as f64, c as f64 / n as f64]).unwrap());
            }
        }
        out
    }

    #[test]
    fn interior_action_has_no_active_multipliers() {
        let s = random_scenario(1, 3, 3);
        let p = build_polytope(&s, &act(&[0.2, 0.3, 0.5])).unwrap();
        assert_eq!(p.active_set(), &[false, false, false]);
        let p = build_polytope(&s, &act(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(p.active_set(), &[false, true, true]);
    }

    #[test]
    fn true_belief_satisfies_system_with_forward_multipliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for seed in 0..20 {
            let s = random_scenario(seed, 3, 3);
            let pi = Belief::new(random_simplex_point(&mut rng, 3)).unwrap();
            let fwd = solve_odm(&s, &pi).unwrap();
            let p = build_polytope(&s, &fwd.action).unwrap();
            let mut z = pi.probs().to_vec();
            z.extend(&fwd.lambda);
            z.extend(&fwd.nu);
            let z = DVector::from_vec(z);
            let r = (&p.stationarity * &z).amax();
            assert!(r <= 1e-7, "stationarity residual {r}");
            for j in 0..3 {
                if !p.active_set[j] {
                    assert!(fwd.lambda[j].abs() <= 1e-7);
                }
                assert!(fwd.lambda[j] >= -1e-7);
            }
            assert!(p.contains(&pi).unwrap());
            assert!(!p.is_empty().unwrap());
        }
    }

    #[test]
    fn dominated_vertex_has_empty_polytope() {
        // Asset 0 has the highest return in every regime, so e₁ is never optimal.
        let s = linear_scenario(&[[0.5, 0.1, 0.0], [0.4, 0.3, 0.1], [0.6, 0.2, 0.5]]);
        let p = build_polytope(&s, &act(&[0.0, 1.0, 0.0])).unwrap();
        assert!(p.is_empty().unwrap());
        assert!(matches!(p.distance(&Belief::uniform(3)), Err(Error::EmptyPolytope)));
        assert!(matches!(p.coordinate_range(0), Err(Error::EmptyPolytope)));
        for b in simplex_grid_beliefs(0.05) {
            assert!(!p.contains(&b).unwrap());
            // Grid confirmation: e₁ never minimizes the linear cost.
            let cost = |u: &[f64]| s.expected_cost(&b, &act(u)).unwrap();
            assert!(cost(&[1.0, 0.0, 0.0]) < cost(&[0.0, 1.0, 0.0]));
        }
        let p = build_polytope(&s, &act(&[1.0, 0.0, 0.0])).unwrap();
        assert!(!p.is_empty().unwrap());
    }

    #[test]
    fn single_regime_polytope() {
        let s = one_regime(vec![0.1, 0.2], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0);
        let fwd = solve_odm(&s, &Belief::vertex(1, 0)).unwrap();
        let p = build_polytope(&s, &fwd.action).unwrap();
        assert!(!p.is_empty().unwrap());
        let (lo, hi) = p.coordinate_range(0).unwrap();
        assert!((lo - 1.0).abs() < 1e-9 && (hi - 1.0).abs() < 1e-9);
        let p = build_polytope(&s, &act(&[0.9, 0.1])).unwrap();
        assert!(p.is_empty().unwrap());
    }

    #[test]
    fn whole_simplex_without_stationarity() {
        // Zero cost: every belief rationalizes every interior allocation.
        let s = one_regime(vec![0.0, 0.0, 0.0], vec![vec![0.0; 3]; 3], 0.0);
        let s = Scenario::new(
            vec![s.regimes()[0].clone(), s.regimes()[0].clone(), s.regimes()[0].clone()],
            0.0,
            ConstraintSet::unit_simplex(3),
            DMatrix::identity(3, 3),
            DMatrix::from_element(3, 1, 1.0),
            0,
        )
        .unwrap();
        let p = build_polytope(&s, &act(&[0.2, 0.3, 0.5])).unwrap();
        for (lo, hi) in p.coordinate_ranges().unwrap() {
            assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        }
        assert!(!p.is_singleton().unwrap());
        assert!(p.distance(&Belief::new(vec![0.1, 0.2, 0.7]).unwrap()).unwrap() < 1e-6);
    }

    #[test]
    fn pinned_polytope_distance_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_scenario(4, 3, 3);
        let pi = Belief::new(vec![0.3, 0.3, 0.4]).unwrap();
        let fwd = solve_odm(&s, &pi).unwrap();
        let p = build_polytope(&s, &fwd.action).unwrap();
        if p.is_singleton().unwrap() {
            let z: Vec<f64> = p.coordinate_ranges().unwrap().iter().map(|r| r.0).collect();
            for _ in 0..5 {
                let r = Belief::new(random_simplex_point(&mut rng, 3)).unwrap();
                let exact = z.iter().zip(r.probs()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!((p.distance(&r).unwrap() - exact).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn growing_active_set_never_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..10 {
            let s = random_scenario(seed, 3, 3);
            let p = build_polytope(&s, &act(&[0.0, 0.4, 0.6])).unwrap();
            let bigger = p.with_active_set(vec![true, true, false]).unwrap();
            for _ in 0..30 {
                let b = Belief::new(random_simplex_point(&mut rng, 3)).unwrap();
                if p.contains(&b).unwrap() {
                    assert!(bigger.contains(&b).unwrap());
                }
            }
            for dir in [[1.0, 0.0, 0.0], [0.0, -1.0, 1.0], [-1.0, 0.5, 0.2]] {
                if let Ok(pt) = p.extreme_point(&dir) {
                    let b = Belief::normalized(pt.iter().map(|v| v.max(0.0)).collect()).unwrap();
                    assert!(bigger.contains(&b).unwrap());
                }
            }
        }
    }

    #[test]
    fn membership_matches_forward_optimality_on_grid() {
        for seed in [3u64, 5, 8] {
            let s = random_scenario(seed, 3, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pi = Belief::new(random_simplex_point(&mut rng, 3)).unwrap();
            let u = solve_odm(&s, &pi).unwrap().action;
            let p = build_polytope(&s, &u).unwrap();
            for b in simplex_grid_beliefs(0.02) {
                let opt = solve_odm(&s, &b).unwrap().cost;
                let gap = s.expected_cost(&b, &u).unwrap() - opt;
                // The cost gap grows quadratically off the set, so beliefs
                // within about 1e-4 of it have gaps too small to classify.
                if p.contains(&b).unwrap() {
                    assert!(gap <= 1e-9, "belief {:?} inside with gap {gap}", b.probs());
                } else {
                    assert!(gap > 1e-12, "belief {:?} outside with gap {gap}", b.probs());
                }
            }
            assert!(p.contains(&pi).unwrap());
        }
    }

    #[test]
    fn json_dump_carries_constraint_matrices() {
        let s = random_scenario(2, 3, 3);
        let p = build_polytope(&s, &act(&[0.0, 0.5, 0.5])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(v["active_set"], serde_json::json!([true, false, false]));
        assert_eq!(v["stationarity_matrix"].as_array().unwrap().len(), 3);
        assert_eq!(v["stationarity_matrix"][0].as_array().unwrap().len(), 3 + 3 + 1);
    }
}
