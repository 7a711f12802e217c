//! Independent reference computations shared by the integration suites.
//! The oracles never call the solvers under test; only the case generators
//! do, to pick interesting inputs.

#![allow(dead_code)]

use cadm_core::adversary::build_polytope;
use cadm_core::experiments::generate_scenario;
use cadm_core::obfuscator::{simplex_grid, solve_odm};
use cadm_core::solvers::{Constraints, LinearProgram};
use cadm_core::{Action, Belief, Scenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A bounded, feasible LP `min cᵀx, A_eq x = b_eq, A x ≤ b, x ≥ 0` kept in
/// raw form for vertex enumeration.
pub struct RawLp {
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl RawLp {
    pub fn vars(&self) -> usize {
        self.c.len()
    }

    pub fn to_program(&self) -> LinearProgram {
        let n = self.vars();
        let rows = |m: &[Vec<f64>]| DMatrix::from_fn(m.len(), n, |r, c| m[r][c]);
        let cons = Constraints::nonnegative(n)
            .equalities(rows(&self.a_eq), DVector::from_column_slice(&self.b_eq))
            .unwrap()
            .inequalities(rows(&self.a), DVector::from_column_slice(&self.b))
            .unwrap();
        LinearProgram::new(DVector::from_column_slice(&self.c), cons).unwrap()
    }

    /// Largest violation of any constraint at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut worst = x.iter().fold(0.0f64, |m, v| m.max(-v));
        for (row, b) in self.a_eq.iter().zip(&self.b_eq) {
            worst = worst.max((dot(row) - b).abs());
        }
        for (row, b) in self.a.iter().zip(&self.b) {
            worst = worst.max(dot(row) - b);
        }
        worst
    }
}

/// Random LP with `n ≤ 5` variables and at most 8 rows. The last inequality
/// caps `Σx`, so the feasible set is bounded; a random nonnegative point is
/// made feasible by construction.
pub fn random_bounded_lp(rng: &mut impl Rng) -> RawLp {
    let n = rng.random_range(2..=5);
    let with_eq = rng.random_bool(0.5);
    let rows = rng.random_range(1..=(if with_eq { 6 } else { 7 }));
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
    let dot = |row: &[f64]| row.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for _ in 0..rows {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        b.push(dot(&row) + rng.random_range(0.0..1.0));
        a.push(row);
    }
    a.push(vec![1.0; n]);
    b.push(x0.iter().sum::<f64>() + rng.random_range(0.5..2.0));
    let (a_eq, b_eq) = if with_eq {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rhs = dot(&row);
        (vec![row], vec![rhs])
    } else {
        (vec![], vec![])
    };
    RawLp {
        c: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        a_eq,
        b_eq,
        a,
        b,
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Every basic feasible point: pick `n − e` of the inequality and bound
/// rows to hold with equality, solve, and keep the feasible solutions.
pub fn enumerate_vertices(lp: &RawLp) -> Vec<Vec<f64>> {
    let n = lp.vars();
    let e = lp.a_eq.len();
    // Candidate tight rows: inequalities first, then the bounds x_j ≥ 0.
    let mut rows: Vec<(Vec<f64>, f64)> = lp.a.iter().cloned().zip(lp.b.iter().copied()).collect();
    for j in 0..n {
        let mut r = vec![0.0; n];
        r[j] = 1.0;
        rows.push((r, 0.0));
    }
    let mut out = Vec::new();
    for pick in combinations(rows.len(), n - e) {
        let mut m = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for (r, (row, b)) in lp.a_eq.iter().zip(&lp.b_eq).enumerate() {
            for c in 0..n {
                m[(r, c)] = row[c];
            }
            rhs[r] = *b;
        }
        for (r, &idx) in pick.iter().enumerate() {
            for c in 0..n {
                m[(e + r, c)] = rows[idx].0[c];
            }
            rhs[e + r] = rows[idx].1;
        }
        let svd = m.clone().svd(false, false);
        if svd.singular_values.min() < 1e-10 {
            continue;
        }
        if let Some(x) = m.lu().solve(&rhs) {
            let x: Vec<f64> = x.iter().copied().collect();
            if lp.violation(&x) <= 1e-9 {
                out.push(x);
            }
        }
    }
    out
}

pub fn vertex_optimum(lp: &RawLp) -> f64 {
    enumerate_vertices(lp)
        .iter()
        .map(|x| x.iter().zip(&lp.c).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Euclidean projection onto the unit simplex by the sort-and-threshold rule.
pub fn simplex_projection(y: &[f64]) -> Vec<f64> {
    let mut s = y.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, v) in s.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Belief-set distance on a three-regime, unit-simplex scenario without any
/// optimization solver. On the simplex the KKT conditions reduce to
/// `g_j(π) = g_k(π)` for held assets `j, k` and `g_j(π) ≥ g_k(π)` for an
/// unheld `j`, where `g(π)` is the belief-averaged gradient (linear in π).
/// With no equality the set is scanned on a grid of the given spacing; with
/// one it is a segment scanned finely; with two it is at most a point.
pub fn belief_set_distance(scenario: &Scenario, u: &Action, reference: &[f64], spacing: f64) -> Option<f64> {
    assert_eq!(scenario.states(), 3);
    let n = scenario.assets();
    let grads: Vec<Vec<f64>> = (0..3).map(|i| scenario.cost_gradient(i, u).unwrap()).collect();
    let held: Vec<usize> = (0..n).filter(|&j| u.alloc()[j] > 1e-7).collect();
    let pivot = held[0];
    // Row r of a linear form in π: coefficient of π_i is grads[i][j] − grads[i][pivot].
    let form = |j: usize| -> [f64; 3] { [0, 1, 2].map(|i| grads[i][j] - grads[i][pivot]) };
    let equalities: Vec<[f64; 3]> = held[1..].iter().map(|&j| form(j)).collect();
    let inequalities: Vec<[f64; 3]> = (0..n).filter(|j| !held.contains(j)).map(form).collect();
    let eval = |f: &[f64; 3], p: &[f64; 3]| f[0] * p[0] + f[1] * p[1] + f[2] * p[2];
    let feasible = |p: &[f64; 3]| inequalities.iter().all(|f| eval(f, p) >= -1e-12);
    let dist = |p: &[f64; 3]| {
        p.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };

    // Independent equality rows (drop numerically repeated ones).
    let scale = |f: &[f64; 3]| f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut eqs: Vec<[f64; 3]> = Vec::new();
    for f in equalities {
        let s = scale(&f);
        if s <= 1e-14 {
            continue;
        }
        let f = f.map(|v| v / s);
        let dependent = eqs.iter().any(|g| {
            let c = [f[1] * g[2] - f[2] * g[1], f[2] * g[0] - f[0] * g[2], f[0] * g[1] - f[1] * g[0]];
            scale(&c) < 1e-10
        });
        if !dependent {
            eqs.push(f);
        }
    }

    match eqs.len() {
        0 => {
            let steps = (1.0 / spacing).round() as usize;
            let mut best: Option<f64> = None;
            for a in 0..=steps {
                for b in 0..=(steps - a) {
                    let p = [a as f64 * spacing, b as f64 * spacing, (steps - a - b) as f64 * spacing];
                    if feasible(&p) {
                        best = Some(best.map_or(dist(&p), |d: f64| d.min(dist(&p))));
                    }
                }
            }
            best
        }
        1 => {
            // Intersect the line f·π = 0 with each simplex edge.
            let f = eqs[0];
            let corners = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            let mut ends: Vec<[f64; 3]> = Vec::new();
            for (i, j) in [(0, 1), (1, 2), (0, 2)] {
                let (fi, fj) = (eval(&f, &corners[i]), eval(&f, &corners[j]));
                if (fi - fj).abs() < 1e-15 {
                    if fi.abs() < 1e-15 {
                        ends.push(corners[i]);
                        ends.push(corners[j]);
                    }
                    continue;
                }
                let t = fi / (fi - fj);
                if (-1e-12..=1.0 + 1e-12).contains(&t) {
                    let t = t.clamp(0.0, 1.0);
                    ends.push([0, 1, 2].map(|k| (1.0 - t) * corners[i][k] + t * corners[j][k]));
                }
            }
            if ends.is_empty() {
                return None;
            }
            let (p, q) = ends
                .iter()
                .flat_map(|p| ends.iter().map(move |q| (*p, *q)))
                .max_by(|a, b| dist_pts(&a.0, &a.1).partial_cmp(&dist_pts(&b.0, &b.1)).unwrap())
                .unwrap();
            let samples = 20_000;
            let mut best: Option<f64> = None;
            for s in 0..=samples {
                let t = s as f64 / samples as f64;
                let x = [0, 1, 2].map(|k| (1.0 - t) * p[k] + t * q[k]);
                if feasible(&x) {
                    best = Some(best.map_or(dist(&x), |d: f64| d.min(dist(&x))));
                }
            }
            best
        }
        _ => {
            let m = DMatrix::from_row_slice(3, 3, &[eqs[0][0], eqs[0][1], eqs[0][2], eqs[1][0], eqs[1][1], eqs[1][2], 1.0, 1.0, 1.0]);
            let x = m.lu().solve(&DVector::from_column_slice(&[0.0, 0.0, 1.0]))?;
            let p = [x[0], x[1], x[2]];
            let residual = eqs[2..].iter().map(|f| eval(f, &p).abs()).fold(0.0, f64::max);
            (p.iter().all(|v| *v >= -1e-9) && feasible(&p) && residual < 1e-9).then(|| dist(&p))
        }
    }
}

fn dist_pts(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Posterior over the final regime by summing over every regime path.
pub fn path_sum_posterior(transition: &DMatrix<f64>, lik: &DMatrix<f64>, prior: &[f64], obs: &[usize]) -> Vec<f64> {
    let x = prior.len();
    let k = obs.len();
    let mut post = vec![0.0; x];
    for code in 0..x.pow(k as u32 + 1) {
        let mut c = code;
        let mut path = Vec::with_capacity(k + 1);
        for _ in 0..=k {
            path.push(c % x);
            c /= x;
        }
        let mut p = prior[path[0]];
        for step in 0..k {
            p *= transition[(path[step], path[step + 1])] * lik[(path[step + 1], obs[step])];
        }
        post[path[k]] += p;
    }
    let z: f64 = post.iter().sum();
    post.iter().map(|v| v / z).collect()
}

/// A uniformly random point of the probability simplex.
pub fn random_belief(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..dim).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Row-stochastic matrix with entries bounded away from zero.
pub fn random_stochastic(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() + 0.05);
    for r in 0..rows {
        let s: f64 = m.row(r).sum();
        for c in 0..cols {
            m[(r, c)] /= s;
        }
    }
    m
}

/// Twenty nonempty three-regime belief sets: ten from forward-optimal
/// actions, ten from grid actions whose set is nonempty.
pub fn distance_cases() -> Vec<(Scenario, Action, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut cases = Vec::new();
    let mut seed = 0;
    while cases.len() < 10 {
        let s = generate_scenario(seed, 3, 3, 2).unwrap();
        let pi = Belief::new(random_belief(&mut rng, 3)).unwrap();
        let u = solve_odm(&s, &pi).unwrap().action;
        cases.push((s, u, random_belief(&mut rng, 3)));
        seed += 1;
    }
    let grid = simplex_grid(3, 10).unwrap();
    while cases.len() < 20 {
        let s = generate_scenario(seed, 3, 3, 2).unwrap();
        seed += 1;
        for u in grid.points() {
            if !build_polytope(&s, u).unwrap().is_empty().unwrap() && rng.random_bool(0.3) {
                cases.push((s.clone(), u.clone(), random_belief(&mut rng, 3)));
                break;
            }
        }
    }
    cases
}


/// `solve_lp` against vertex enumeration on 50 random bounded LPs; returns
/// the largest objective gap.
pub fn check_lp_oracle(tol: f64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let lp = random_bounded_lp(&mut rng);
        let oracle = vertex_optimum(&lp);
        let sol = cadm_core::solvers::solve_lp(&lp.to_program())
            .optimal("lp")
            .map_err(|e| format!("case {case}: {e}"))?;
        let gap = (sol.objective - oracle).abs();
        worst = worst.max(gap);
        if gap > tol {
            return Err(format!("case {case}: {} vs {oracle}", sol.objective));
        }
        if lp.violation(&sol.x) > 1e-9 {
            return Err(format!("case {case}: answer violates the constraints"));
        }
    }
    Ok(worst)
}

/// `solve_qp` against the sort-and-threshold projection onto the simplex on
/// 50 random points; returns the largest coordinate gap.
pub fn check_qp_oracle(tol: f64) -> Result<f64, String> {
    use cadm_core::solvers::{solve_qp, Constraints, QuadraticProgram};
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let n = rng.random_range(2..=8);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cons = Constraints::nonnegative(n)
            .equalities(DMatrix::from_element(1, n, 1.0), DVector::from_element(1, 1.0))
            .map_err(|e| e.to_string())?;
        let qp = QuadraticProgram::new(DMatrix::identity(n, n), -DVector::from_column_slice(&y), cons)
            .map_err(|e| e.to_string())?;
        let sol = solve_qp(&qp).optimal("qp").map_err(|e| format!("case {case}: {e}"))?;
        let oracle = simplex_projection(&y);
        for (a, b) in sol.x.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
        if worst > tol {
            return Err(format!("case {case}: {:?} vs {oracle:?}", sol.x));
        }
    }
    Ok(worst)
}

/// Polytope distance against the dense-grid scan on the twenty
/// [`distance_cases`]; returns the largest gap.
pub fn check_distance_oracle(tol: f64) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for (i, (s, u, r)) in distance_cases().into_iter().enumerate() {
        let oracle = belief_set_distance(&s, &u, &r, 0.01).ok_or(format!("case {i}: oracle finds no set"))?;
        let d = build_polytope(&s, &u)
            .and_then(|p| p.distance(&Belief::new(r)?))
            .map_err(|e| format!("case {i}: {e}"))?;
        worst = worst.max((d - oracle).abs());
        if (d - oracle).abs() > tol {
            return Err(format!("case {i}: {d} vs {oracle}"));
        }
        if d > oracle + 1e-7 {
            return Err(format!("case {i}: {d} above the sampled upper bound {oracle}"));
        }
    }
    Ok(worst)
}
