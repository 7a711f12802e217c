//! Operator-splitting QP solver with active-set polishing.
//!
//! All constraints are stacked into `l ≤ Cx ≤ u` and solved with relaxed
//! ADMM on the splitting `Cx = z`, `z ∈ [l, u]`. Once the iterates are close,
//! the guessed active set is used to solve the equality-constrained KKT
//! system directly; the polished point is kept only if it passes the full
//! primal and dual tolerances with correct multiplier signs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use super::{check_feasible, Duals, QuadraticProgram, Solution, SolveStatus, QP_ITERATION_LIMIT};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_iterations: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            eps_primal: 1e-8,
            eps_dual: 1e-6,
            max_iterations: QP_ITERATION_LIMIT,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            polish: true,
        }
    }
}

const EQ_RHO_SCALE: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const CHECK_EVERY: usize = 5;
const ADAPT_EVERY: usize = 25;
const POLISH_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowKind {
    Eq,
    Ineq,
    Bound,
}

struct Stacked {
    c: DMatrix<f64>,
    ct: DMatrix<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
    kinds: Vec<RowKind>,
}

impl Stacked {
    fn build(qp: &QuadraticProgram) -> Self {
        let cons = &qp.constraints;
        let n = cons.vars();
        let bounded: Vec<(usize, f64)> = cons
            .bounds()
            .iter()
            .enumerate()
            .filter_map(|(j, lb)| lb.map(|lb| (j, lb)))
            .collect();
        let m_eq = cons.a_eq().nrows();
        let m_in = cons.a_ineq().nrows();
        let m = m_eq + m_in + bounded.len();
        let mut c = DMatrix::zeros(m, n);
        let mut lo = DVector::zeros(m);
        let mut hi = DVector::zeros(m);
        let mut kinds = Vec::with_capacity(m);
        for r in 0..m_eq {
            c.row_mut(r).copy_from(&cons.a_eq().row(r));
            lo[r] = cons.b_eq()[r];
            hi[r] = cons.b_eq()[r];
            kinds.push(RowKind::Eq);
        }
        for r in 0..m_in {
            c.row_mut(m_eq + r).copy_from(&cons.a_ineq().row(r));
            lo[m_eq + r] = f64::NEG_INFINITY;
            hi[m_eq + r] = cons.b_ineq()[r];
            kinds.push(RowKind::Ineq);
        }
        for (k, &(j, lb)) in bounded.iter().enumerate() {
            let r = m_eq + m_in + k;
            c[(r, j)] = 1.0;
            lo[r] = lb;
            hi[r] = f64::INFINITY;
            kinds.push(RowKind::Bound);
        }
        let ct = c.transpose();
        Stacked { c, ct, lo, hi, kinds }
    }

    fn rows(&self) -> usize {
        self.kinds.len()
    }

    fn project(&self, v: &mut DVector<f64>) {
        for i in 0..v.len() {
            v[i] = v[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    fn violation(&self, cx: &DVector<f64>) -> f64 {
        (0..cx.len()).fold(0.0f64, |m, i| {
            m.max(self.lo[i] - cx[i]).max(cx[i] - self.hi[i])
        })
    }
}

pub fn solve_qp(qp: &QuadraticProgram) -> SolveStatus {
    solve_qp_with(qp, &QpSettings::default())
}

pub fn solve_qp_with(qp: &QuadraticProgram, settings: &QpSettings) -> SolveStatus {
    match check_feasible(&qp.constraints) {
        Ok(true) => {}
        Ok(false) => return SolveStatus::Infeasible,
        Err(_) => return SolveStatus::IterationLimit,
    }
    let n = qp.constraints.vars();
    if n == 0 {
        return SolveStatus::Optimal(Solution {
            x: Vec::new(),
            objective: 0.0,
            iterations: 0,
            duals: Some(Duals {
                eq: vec![0.0; qp.constraints.a_eq().nrows()],
                ineq: vec![0.0; qp.constraints.a_ineq().nrows()],
                lower: Vec::new(),
            }),
        });
    }
    let st = Stacked::build(qp);
    let m = st.rows();
    let q = &qp.q_vector;
    let qm = &qp.q_matrix;

    let mut rho = settings.rho;
    let mut rho_vec = rho_vector(&st, rho);
    let mut kkt = factor(qm, &st, &rho_vec, settings.sigma);

    let mut x = DVector::<f64>::zeros(n);
    let mut z = DVector::<f64>::zeros(m);
    st.project(&mut z);
    let mut y = DVector::<f64>::zeros(m);

    let alpha = settings.alpha;
    for iter in 1..=settings.max_iterations {
        let x_prev = x.clone();
        let rhs = &x * settings.sigma - q + &st.ct * (rho_vec.component_mul(&z) - &y);
        let x_tilde = kkt.solve(&rhs);
        let z_tilde = &st.c * &x_tilde;
        x = &x_tilde * alpha + &x * (1.0 - alpha);
        let z_relaxed = &z_tilde * alpha + &z * (1.0 - alpha);
        let mut z_next = &z_relaxed + y.component_div(&rho_vec);
        st.project(&mut z_next);
        y += rho_vec.component_mul(&(&z_relaxed - &z_next));
        z = z_next;

        if iter % CHECK_EVERY != 0 {
            continue;
        }
        let cx = &st.c * &x;
        let qx = qm * &x;
        let cty = &st.ct * &y;
        let r_prim = (&cx - &z).amax();
        let r_dual = (&qx + q + &cty).amax();

        let converged = r_prim <= settings.eps_primal && r_dual <= settings.eps_dual;
        if settings.polish && (converged || iter % POLISH_EVERY == 0) {
            if let Some(sol) = polish(qp, &st, &x, &z, &y, settings, iter) {
                return SolveStatus::Optimal(sol);
            }
        }
        if converged {
            return SolveStatus::Optimal(finish(qp, &st, x, &y, iter));
        }

        if unbounded_direction(qp, &st, &(&x - &x_prev)) {
            return SolveStatus::Unbounded;
        }

        if iter % ADAPT_EVERY == 0 {
            let prim_scale = cx.amax().max(z.amax()).max(1e-30);
            let dual_scale = qx.amax().max(cty.amax()).max(q.amax()).max(1e-30);
            let ratio = ((r_prim / prim_scale) / (r_dual / dual_scale).max(1e-30)).sqrt();
            if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
                let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                if new_rho != rho {
                    rho = new_rho;
                    rho_vec = rho_vector(&st, rho);
                    kkt = factor(qm, &st, &rho_vec, settings.sigma);
                }
            }
        }
    }
    if settings.polish {
        if let Some(sol) = polish(qp, &st, &x, &z, &y, settings, settings.max_iterations) {
            return SolveStatus::Optimal(sol);
        }
    }
    SolveStatus::IterationLimit
}

fn rho_vector(st: &Stacked, rho: f64) -> DVector<f64> {
    DVector::from_iterator(
        st.rows(),
        st.kinds.iter().map(|k| match k {
            RowKind::Eq => (rho * EQ_RHO_SCALE).min(RHO_MAX),
            _ => rho,
        }),
    )
}

fn factor(qm: &DMatrix<f64>, st: &Stacked, rho_vec: &DVector<f64>, sigma: f64) -> Cholesky<f64, Dyn> {
    let n = qm.nrows();
    let mut scaled_c = st.c.clone();
    for (r, rho) in rho_vec.iter().enumerate() {
        scaled_c.row_mut(r).scale_mut(*rho);
    }
    let mut k = qm + DMatrix::identity(n, n) * sigma + &st.ct * scaled_c;
    k = (&k + k.transpose()) * 0.5;
    let mut shift = 0.0;
    loop {
        let attempt = if shift > 0.0 {
            &k + DMatrix::identity(n, n) * shift
        } else {
            k.clone()
        };
        if let Some(ch) = Cholesky::new(attempt) {
            return ch;
        }
        shift = if shift == 0.0 { 1e-12 } else { shift * 10.0 };
    }
}

fn unbounded_direction(qp: &QuadraticProgram, st: &Stacked, dx: &DVector<f64>) -> bool {
    let norm = dx.amax();
    if norm < 1e-12 {
        return false;
    }
    let eps = 1e-7 * norm;
    if (&qp.q_matrix * dx).amax() > eps || qp.q_vector.dot(dx) > -eps {
        return false;
    }
    let cdx = &st.c * dx;
    (0..st.rows()).all(|i| {
        let lo_ok = st.lo[i] == f64::NEG_INFINITY || cdx[i] >= -eps;
        let hi_ok = st.hi[i] == f64::INFINITY || cdx[i] <= eps;
        lo_ok && hi_ok
    })
}

fn make_duals(st: &Stacked, y: &DVector<f64>) -> Duals {
    let mut duals = Duals {
        eq: Vec::new(),
        ineq: Vec::new(),
        lower: Vec::new(),
    };
    for (i, kind) in st.kinds.iter().enumerate() {
        match kind {
            RowKind::Eq => duals.eq.push(y[i]),
            RowKind::Ineq => duals.ineq.push(y[i]),
            RowKind::Bound => duals.lower.push(-y[i]),
        }
    }
    duals
}

fn finish(qp: &QuadraticProgram, st: &Stacked, x: DVector<f64>, y: &DVector<f64>, iterations: usize) -> Solution {
    let x: Vec<f64> = x.iter().copied().collect();
    Solution {
        objective: qp.objective_at(&x),
        x,
        iterations,
        duals: Some(make_duals(st, y)),
    }
}

fn polish(
    qp: &QuadraticProgram,
    st: &Stacked,
    x: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
    settings: &QpSettings,
    iterations: usize,
) -> Option<Solution> {
    let n = x.len();
    #[derive(Clone, Copy, PartialEq)]
    enum Side {
        Lower,
        Upper,
        Both,
    }
    let mut active: Vec<(usize, Side)> = Vec::new();
    for i in 0..st.rows() {
        if st.kinds[i] == RowKind::Eq {
            active.push((i, Side::Both));
        } else if st.lo[i].is_finite() && z[i] - st.lo[i] < -y[i] {
            active.push((i, Side::Lower));
        } else if st.hi[i].is_finite() && st.hi[i] - z[i] < y[i] {
            active.push((i, Side::Upper));
        }
    }
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.q_matrix);
    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -qp.q_vector[j];
    }
    for (a, &(i, side)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + a, j)] = st.c[(i, j)];
            kkt[(j, n + a)] = st.c[(i, j)];
        }
        rhs[n + a] = match side {
            Side::Upper => st.hi[i],
            _ => st.lo[i],
        };
    }
    let delta = 1e-9;
    let mut reg = kkt.clone();
    for j in 0..n {
        reg[(j, j)] += delta;
    }
    for a in 0..k {
        reg[(n + a, n + a)] -= delta;
    }
    let lu: LU<f64, Dyn, Dyn> = reg.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..20 {
        let r = &rhs - &kkt * &sol;
        if r.amax() < 1e-15 {
            break;
        }
        sol += lu.solve(&r)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let mut xp = DVector::from_iterator(n, sol.iter().take(n).copied());
    let mut yp = DVector::zeros(st.rows());
    for (a, &(i, side)) in active.iter().enumerate() {
        let mult = sol[n + a];
        let ok = match side {
            Side::Lower => mult <= 1e-9,
            Side::Upper => mult >= -1e-9,
            Side::Both => true,
        };
        if !ok {
            return None;
        }
        yp[i] = match side {
            Side::Lower => mult.min(0.0),
            Side::Upper => mult.max(0.0),
            Side::Both => mult,
        };
    }
    // Snap active simple bounds exactly.
    for &(i, side) in &active {
        if st.kinds[i] == RowKind::Bound && side == Side::Lower {
            let j = (0..n).find(|&j| st.c[(i, j)] != 0.0).expect("bound row has a unit entry");
            xp[j] = st.lo[i];
        }
    }
    let cx = &st.c * &xp;
    let r_prim = st.violation(&cx);
    let r_dual = (&qp.q_matrix * &xp + &qp.q_vector + &st.ct * &yp).amax();
    if r_prim > settings.eps_primal || r_dual > settings.eps_dual {
        return None;
    }
    Some(finish(qp, st, xp, &yp, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{solve_lp, Constraints, LinearProgram, StatusKind};
    use nalgebra::DMatrix;

    fn simplex(n: usize) -> Constraints {
        Constraints::nonnegative(n)
            .equalities(DMatrix::from_element(1, n, 1.0), DVector::from_element(1, 1.0))
            .unwrap()
    }

    fn projection(target: &[f64]) -> QuadraticProgram {
        let n = target.len();
        QuadraticProgram::new(
            DMatrix::identity(n, n) * 2.0,
            DVector::from_iterator(n, target.iter().map(|t| -2.0 * t)),
            simplex(n),
        )
        .unwrap()
    }

    #[test]
    fn symmetric_projection() {
        let sol = solve_qp(&projection(&[2.0, 2.0])).optimal("t").unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-9 && (sol.x[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn projection_onto_vertex() {
        let sol = solve_qp(&projection(&[0.9, -0.5])).optimal("t").unwrap();
        assert_eq!(sol.x, vec![1.0, 0.0]);
    }

    #[test]
    fn infeasible_constraints() {
        let cons = simplex(2)
            .inequalities(DMatrix::from_element(1, 2, 1.0), DVector::from_element(1, 0.5))
            .unwrap();
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2), DVector::zeros(2), cons).unwrap();
        assert_eq!(solve_qp(&qp).kind(), StatusKind::Infeasible);
    }

    #[test]
    fn unbounded_linear_direction() {
        let cons = Constraints::nonnegative(2);
        let qp = QuadraticProgram::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DVector::from_column_slice(&[0.0, -1.0]),
            cons,
        )
        .unwrap();
        assert_eq!(solve_qp(&qp).kind(), StatusKind::Unbounded);
    }

    #[test]
    fn free_variables_and_duals() {
        // min ½‖x‖² s.t. x1 + x2 = 2, both free → x = (1,1), ν = −1.
        let cons = Constraints::nonnegative(2)
            .lower_bounds(vec![None, None])
            .unwrap()
            .equalities(DMatrix::from_element(1, 2, 1.0), DVector::from_element(1, 2.0))
            .unwrap();
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2), DVector::zeros(2), cons).unwrap();
        let sol = solve_qp(&qp).optimal("t").unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && (sol.x[1] - 1.0).abs() < 1e-9);
        let duals = sol.duals.unwrap();
        assert!((duals.eq[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_hessian_matches_lp() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 1.0, 3.0, 1.0, 2.0]);
        let cons = Constraints::nonnegative(3)
            .inequalities(a, DVector::from_column_slice(&[4.0, 5.0]))
            .unwrap();
        let c = DVector::from_column_slice(&[-1.0, -1.5, -0.7]);
        let lp = solve_lp(&LinearProgram::new(c.clone(), cons.clone()).unwrap())
            .optimal("lp")
            .unwrap();
        let qp = solve_qp(&QuadraticProgram::new(DMatrix::zeros(3, 3), c, cons).unwrap())
            .optimal("qp")
            .unwrap();
        assert!((lp.objective - qp.objective).abs() < 1e-6);
    }
}
