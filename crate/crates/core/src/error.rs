use std::path::PathBuf;

use crate::solvers::StatusKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} index {index} out of range (size {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("observation {observation} has zero likelihood under every predicted regime")]
    ImpossibleObservation { observation: usize },

    #[error("{context}: solver returned {status:?}")]
    Solver {
        context: &'static str,
        status: StatusKind,
    },

    #[error("belief polytope is empty")]
    EmptyPolytope,

    #[error("randomized policy is infeasible: {0}")]
    PolicyInfeasible(PolicyInfeasibility),

    #[error("simplex grid would hold {count} points (limit {limit})")]
    GridTooLarge { count: u128, limit: u128 },

    #[error("ternary plots require dimension 3 (got actions {actions}, beliefs {beliefs})")]
    TernaryDimension { actions: usize, beliefs: usize },

    #[error("timestep {k}: {source}")]
    AtTimestep {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Why the randomized-policy linear program has no feasible mass vector.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyInfeasibility {
    /// Every candidate is outside the constraint set or scores negative infinity.
    AllCandidatesExcluded,
    /// The cheapest admissible candidate already exceeds the cost cap.
    CapBelowCheapest { cheapest: f64, cap: f64 },
}

impl std::fmt::Display for PolicyInfeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyInfeasibility::AllCandidatesExcluded => {
                write!(f, "all candidate actions are excluded")
            }
            PolicyInfeasibility::CapBelowCheapest { cheapest, cap } => write!(
                f,
                "cost cap {cap} is below the cheapest admissible candidate cost {cheapest}"
            ),
        }
    }
}

impl Error {
    /// True when the failure came from a numerical solver rather than bad input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::Solver { .. } | Error::PolicyInfeasible(_) | Error::EmptyPolytope => true,
            Error::AtTimestep { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }

    pub(crate) fn at_timestep(self, k: usize) -> Error {
        Error::AtTimestep {
            k,
            source: Box::new(self),
        }
    }
}
