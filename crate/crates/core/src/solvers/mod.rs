//! Dense LP and convex QP engines.
//!
//! Both solvers share one constraint description: equalities `A_eq x = b_eq`,
//! inequalities `A_in x ≤ b_in`, and per-variable lower bounds (`None` means
//! free). Problems here are tiny, so everything is dense.

mod lp;
mod qp;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use lp::{check_feasible, feasible_within, solve_lp};
pub use qp::{solve_qp, solve_qp_with, QpSettings};

/// Maximum simplex pivots across both phases.
pub const LP_PIVOT_LIMIT: usize = 10_000;
/// Maximum operator-splitting iterations.
pub const QP_ITERATION_LIMIT: usize = 50_000;
/// Phase-one optimum above this value means infeasible.
pub const INFEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    vars: usize,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    a_ineq: DMatrix<f64>,
    b_ineq: DVector<f64>,
    lower_bounds: Vec<Option<f64>>,
}

impl Constraints {
    /// No rows; every variable bounded below by zero.
    pub fn nonnegative(vars: usize) -> Self {
        Constraints {
            vars,
            a_eq: DMatrix::zeros(0, vars),
            b_eq: DVector::zeros(0),
            a_ineq: DMatrix::zeros(0, vars),
            b_ineq: DVector::zeros(0),
            lower_bounds: vec![Some(0.0); vars],
        }
    }

    pub fn equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        self.check_block(&a, &b, "equality system")?;
        self.a_eq = a;
        self.b_eq = b;
        Ok(self)
    }

    pub fn inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        self.check_block(&a, &b, "inequality system")?;
        self.a_ineq = a;
        self.b_ineq = b;
        Ok(self)
    }

    pub fn lower_bounds(mut self, bounds: Vec<Option<f64>>) -> Result<Self> {
        if bounds.len() != self.vars {
            return Err(Error::DimensionMismatch {
                context: "lower bounds",
                expected: self.vars,
                actual: bounds.len(),
            });
        }
        if bounds.iter().flatten().any(|b| !b.is_finite()) {
            return Err(Error::Config("lower bounds must be finite or absent".into()));
        }
        self.lower_bounds = bounds;
        Ok(self)
    }

    fn check_block(&self, a: &DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<()> {
        if a.ncols() != self.vars {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.vars,
                actual: a.ncols(),
            });
        }
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                context,
                expected: a.nrows(),
                actual: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{context} has non-finite coefficients")));
        }
        Ok(())
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn a_eq(&self) -> &DMatrix<f64> {
        &self.a_eq
    }

    pub fn b_eq(&self) -> &DVector<f64> {
        &self.b_eq
    }

    pub fn a_ineq(&self) -> &DMatrix<f64> {
        &self.a_ineq
    }

    pub fn b_ineq(&self) -> &DVector<f64> {
        &self.b_ineq
    }

    pub fn bounds(&self) -> &[Option<f64>] {
        &self.lower_bounds
    }

    /// Max-norm violation of every constraint at `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        let eq = (&self.a_eq * &x - &self.b_eq).amax();
        let ineq = (&self.a_ineq * &x - &self.b_ineq)
            .iter()
            .fold(0.0f64, |m, v| m.max(*v));
        let bound = self
            .lower_bounds
            .iter()
            .zip(x.iter())
            .filter_map(|(lb, v)| lb.map(|lb| lb - v))
            .fold(0.0f64, f64::max);
        eq.max(ineq).max(bound)
    }
}

/// Minimize `cᵀx` subject to [`Constraints`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub constraints: Constraints,
}

impl LinearProgram {
    pub fn new(objective: DVector<f64>, constraints: Constraints) -> Result<Self> {
        if objective.len() != constraints.vars {
            return Err(Error::DimensionMismatch {
                context: "LP objective",
                expected: constraints.vars,
                actual: objective.len(),
            });
        }
        if objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("LP objective has non-finite coefficients".into()));
        }
        Ok(LinearProgram {
            objective,
            constraints,
        })
    }
}

/// Minimize `½xᵀQx + qᵀx` subject to [`Constraints`], with `Q` symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub q_matrix: DMatrix<f64>,
    pub q_vector: DVector<f64>,
    pub constraints: Constraints,
}

impl QuadraticProgram {
    pub fn new(q_matrix: DMatrix<f64>, q_vector: DVector<f64>, constraints: Constraints) -> Result<Self> {
        let n = constraints.vars;
        if q_matrix.nrows() != n || q_matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "QP matrix",
                expected: n,
                actual: q_matrix.nrows(),
            });
        }
        if q_vector.len() != n {
            return Err(Error::DimensionMismatch {
                context: "QP linear term",
                expected: n,
                actual: q_vector.len(),
            });
        }
        if q_matrix.iter().chain(q_vector.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("QP data has non-finite coefficients".into()));
        }
        if n > 0 {
            let asym = (&q_matrix - q_matrix.transpose()).amax();
            if asym > 1e-10 {
                return Err(Error::Config(format!("QP matrix asymmetric by {asym}")));
            }
            let min_eig = q_matrix.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-10 {
                return Err(Error::Config(format!("QP matrix has eigenvalue {min_eig}")));
            }
        }
        Ok(QuadraticProgram {
            q_matrix,
            q_vector,
            constraints,
        })
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.q_matrix * &x)) + self.q_vector.dot(&x)
    }
}

/// Lagrange multipliers under the convention
/// `Qx + q + A_eqᵀ·eq + A_inᵀ·ineq − lower = 0`, with `ineq, lower ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Duals {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub duals: Option<Duals>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusKind {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Optimal(Solution),
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl SolveStatus {
    pub fn kind(&self) -> StatusKind {
        match self {
            SolveStatus::Optimal(_) => StatusKind::Optimal,
            SolveStatus::Infeasible => StatusKind::Infeasible,
            SolveStatus::Unbounded => StatusKind::Unbounded,
            SolveStatus::IterationLimit => StatusKind::IterationLimit,
        }
    }

    pub fn optimal(self, context: &'static str) -> Result<Solution> {
        match self {
            SolveStatus::Optimal(s) => Ok(s),
            other => Err(Error::Solver {
                context,
                status: other.kind(),
            }),
        }
    }
}
