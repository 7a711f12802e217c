//! Two-phase dense tableau simplex.
//!
//! Pricing is Dantzig (most negative reduced cost, lowest index on ties) and
//! switches to Bland's rule for the rest of a phase once more than
//! [`BLAND_AFTER`] degenerate pivots have been taken. The ratio test breaks
//! ties by the lowest basic variable index, so runs are bit-reproducible.

use nalgebra::{DMatrix, DVector};

use super::{Constraints, LinearProgram, Solution, SolveStatus, INFEASIBILITY_TOL, LP_PIVOT_LIMIT};
use crate::error::{Error, Result};

const BLAND_AFTER: usize = 100;
const PRICING_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;

pub fn solve_lp(lp: &LinearProgram) -> SolveStatus {
    solve_with_tolerance(lp, INFEASIBILITY_TOL)
}

/// Phase-one feasibility with the default infeasibility threshold.
pub fn check_feasible(constraints: &Constraints) -> Result<bool> {
    feasible_within(constraints, INFEASIBILITY_TOL)
}

/// Phase-one feasibility: true iff the minimum total artificial infeasibility
/// is at most `tol`.
pub fn feasible_within(constraints: &Constraints, tol: f64) -> Result<bool> {
    let lp = LinearProgram {
        objective: DVector::zeros(constraints.vars()),
        constraints: constraints.clone(),
    };
    match solve_with_tolerance(&lp, tol) {
        SolveStatus::Optimal(_) => Ok(true),
        SolveStatus::Infeasible => Ok(false),
        other => Err(Error::Solver {
            context: "feasibility check",
            status: other.kind(),
        }),
    }
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = lb + s`, `s ≥ 0`.
    Shifted { col: usize, lb: f64 },
    /// `x = s⁺ − s⁻`.
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    a: DMatrix<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    vars: Vec<VarMap>,
    /// Column that can seed the basis for a row (a slack with coefficient +1).
    seed: Vec<Option<usize>>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let c = &lp.constraints;
        let mut vars = Vec::with_capacity(c.vars());
        let mut ncols = 0;
        for lb in c.bounds() {
            match lb {
                Some(lb) => {
                    vars.push(VarMap::Shifted { col: ncols, lb: *lb });
                    ncols += 1;
                }
                None => {
                    vars.push(VarMap::Split {
                        pos: ncols,
                        neg: ncols + 1,
                    });
                    ncols += 2;
                }
            }
        }
        let m_eq = c.a_eq().nrows();
        let m_in = c.a_ineq().nrows();
        let slack0 = ncols;
        ncols += m_in;
        let m = m_eq + m_in;
        let mut a = DMatrix::zeros(m, ncols);
        let mut b = vec![0.0; m];
        let mut seed = vec![None; m];
        for r in 0..m {
            let (row, rhs) = if r < m_eq {
                (c.a_eq().row(r), c.b_eq()[r])
            } else {
                (c.a_ineq().row(r - m_eq), c.b_ineq()[r - m_eq])
            };
            let mut rhs = rhs;
            for (j, map) in vars.iter().enumerate() {
                let coef = row[j];
                match *map {
                    VarMap::Shifted { col, lb } => {
                        a[(r, col)] = coef;
                        rhs -= coef * lb;
                    }
                    VarMap::Split { pos, neg } => {
                        a[(r, pos)] = coef;
                        a[(r, neg)] = -coef;
                    }
                }
            }
            if r >= m_eq {
                a[(r, slack0 + r - m_eq)] = 1.0;
            }
            if rhs < 0.0 {
                for c in 0..ncols {
                    a[(r, c)] = -a[(r, c)];
                }
                rhs = -rhs;
            } else if r >= m_eq {
                seed[r] = Some(slack0 + r - m_eq);
            }
            b[r] = rhs;
        }
        let mut cost = vec![0.0; ncols];
        for (j, map) in vars.iter().enumerate() {
            match *map {
                VarMap::Shifted { col, .. } => cost[col] = lp.objective[j],
                VarMap::Split { pos, neg } => {
                    cost[pos] = lp.objective[j];
                    cost[neg] = -lp.objective[j];
                }
            }
        }
        StandardForm {
            a,
            b,
            cost,
            vars,
            seed,
        }
    }

    fn recover(&self, std_x: &[f64]) -> Vec<f64> {
        self.vars
            .iter()
            .map(|map| match *map {
                VarMap::Shifted { col, lb } => lb + std_x[col],
                VarMap::Split { pos, neg } => std_x[pos] - std_x[neg],
            })
            .collect()
    }
}

enum Halt {
    Unbounded,
    IterationLimit,
}

/// Row-major tableau with the reduced-cost row kept separately.
struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows × (cols + 1)`; last column is the right-hand side.
    t: Vec<f64>,
    /// Reduced costs; last entry is minus the current objective.
    d: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn price(&mut self, cost: &[f64]) {
        let w = self.width();
        self.d = cost.to_vec();
        self.d.push(0.0);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for c in 0..w {
                    self.d[c] -= cb * self.t[r * w + c];
                }
            }
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width();
        let p = self.t[pr * w + pc];
        for c in 0..w {
            self.t[pr * w + c] /= p;
        }
        self.t[pr * w + pc] = 1.0;
        let pivot_row: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for c in 0..w {
                    self.t[r * w + c] -= f * pivot_row[c];
                }
                self.t[r * w + pc] = 0.0;
                let rhs = &mut self.t[r * w + self.cols];
                if *rhs < 0.0 && *rhs > -1e-11 {
                    *rhs = 0.0;
                }
            }
        }
        let f = self.d[pc];
        if f != 0.0 {
            for c in 0..w {
                self.d[c] -= f * pivot_row[c];
            }
            self.d[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    fn run(&mut self, allowed: &[bool]) -> Result<(), Halt> {
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            let entering = if bland {
                (0..self.cols).find(|&c| allowed[c] && self.d[c] < -PRICING_TOL)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for c in 0..self.cols {
                    if allowed[c] && self.d[c] < -PRICING_TOL && best.is_none_or(|(_, v)| self.d[c] < v) {
                        best = Some((c, self.d[c]));
                    }
                }
                best.map(|(c, _)| c)
            };
            let Some(e) = entering else {
                return Ok(());
            };

            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, e);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let tie = (ratio - lratio).abs() <= RATIO_TIE * lratio.max(1.0);
                            if (tie && self.basis[r] < self.basis[lr]) || (!tie && ratio < lratio) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((l, ratio)) = leave else {
                return Err(Halt::Unbounded);
            };
            if ratio <= RATIO_TIE {
                degenerate += 1;
                if degenerate > BLAND_AFTER {
                    bland = true;
                }
            }
            if self.pivots >= LP_PIVOT_LIMIT {
                return Err(Halt::IterationLimit);
            }
            self.pivot(l, e);
        }
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.width();
        self.t.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.rows -= 1;
    }
}

fn solve_with_tolerance(lp: &LinearProgram, infeasibility_tol: f64) -> SolveStatus {
    let sf = StandardForm::build(lp);
    let m = sf.b.len();
    let n_std = sf.cost.len();

    let artificial_rows: Vec<usize> = (0..m).filter(|&r| sf.seed[r].is_none()).collect();
    let cols = n_std + artificial_rows.len();
    let w = cols + 1;
    let mut t = vec![0.0; m * w];
    let mut basis = vec![0; m];
    for r in 0..m {
        for c in 0..n_std {
            t[r * w + c] = sf.a[(r, c)];
        }
        t[r * w + cols] = sf.b[r];
    }
    for (k, &r) in artificial_rows.iter().enumerate() {
        t[r * w + n_std + k] = 1.0;
        basis[r] = n_std + k;
    }
    for r in 0..m {
        if let Some(s) = sf.seed[r] {
            basis[r] = s;
        }
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        d: Vec::new(),
        basis,
        pivots: 0,
    };

    if !artificial_rows.is_empty() {
        let mut phase1_cost = vec![0.0; cols];
        phase1_cost[n_std..].iter_mut().for_each(|c| *c = 1.0);
        tab.price(&phase1_cost);
        let allowed = vec![true; cols];
        match tab.run(&allowed) {
            Ok(()) => {}
            Err(Halt::IterationLimit) => return SolveStatus::IterationLimit,
            // Phase one is bounded below by zero.
            Err(Halt::Unbounded) => return SolveStatus::IterationLimit,
        }
        let infeasibility: f64 = (0..tab.rows)
            .filter(|&r| tab.basis[r] >= n_std)
            .map(|r| tab.rhs(r))
            .sum();
        if infeasibility > infeasibility_tol {
            return SolveStatus::Infeasible;
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tab.rows {
            if tab.basis[r] >= n_std {
                let replacement = (0..n_std)
                    .filter(|&c| tab.at(r, c).abs() > PIVOT_TOL)
                    .max_by(|&a, &b| tab.at(r, a).abs().total_cmp(&tab.at(r, b).abs()).then(b.cmp(&a)));
                match replacement {
                    Some(c) => {
                        tab.pivot(r, c);
                        r += 1;
                    }
                    None => tab.remove_row(r),
                }
            } else {
                r += 1;
            }
        }
    }

    let mut phase2_cost = sf.cost.clone();
    phase2_cost.resize(cols, 0.0);
    tab.price(&phase2_cost);
    let mut allowed = vec![true; cols];
    allowed[n_std..].iter_mut().for_each(|a| *a = false);
    match tab.run(&allowed) {
        Ok(()) => {}
        Err(Halt::Unbounded) => return SolveStatus::Unbounded,
        Err(Halt::IterationLimit) => return SolveStatus::IterationLimit,
    }

    let mut std_x = vec![0.0; n_std];
    for r in 0..tab.rows {
        if tab.basis[r] < n_std {
            std_x[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    resolve_basis(&sf, &tab, &mut std_x);

    let x = sf.recover(&std_x);
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    SolveStatus::Optimal(Solution {
        x,
        objective,
        iterations: tab.pivots,
        duals: None,
    })
}

/// Recomputes basic values from the original columns to shed accumulated
/// pivoting round-off. Keeps the tableau values if the re-solve is worse.
fn resolve_basis(sf: &StandardForm, tab: &Tableau, std_x: &mut [f64]) {
    if tab.rows == 0 || tab.basis.iter().any(|&b| b >= sf.cost.len()) {
        return;
    }
    // Surviving rows are the original rows minus the removed redundant ones;
    // solve in the least-squares sense over all original rows.
    let m = sf.b.len();
    let k = tab.rows;
    let bmat = DMatrix::from_fn(m, k, |r, c| sf.a[(r, tab.basis[c])]);
    let rhs = DVector::from_column_slice(&sf.b);
    let Ok(sol) = bmat.clone().svd(true, true).solve(&rhs, 1e-13) else {
        return;
    };
    if sol.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return;
    }
    let residual = |x: &[f64]| {
        let xv = DVector::from_column_slice(x);
        (&sf.a * xv - &rhs).amax()
    };
    let mut candidate = std_x.to_vec();
    for (c, &b) in tab.basis.iter().enumerate() {
        candidate[b] = sol[c].max(0.0);
    }
    if residual(&candidate) <= residual(std_x) {
        std_x.copy_from_slice(&candidate);
    }
}
