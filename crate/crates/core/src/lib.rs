//! Counter-adversarial sequential decision making for a regime-switching
//! portfolio allocator.
//!
//! An agent filters a hidden market regime into a private belief and picks a
//! mean-variance allocation. An adversary who knows the cost model inverts
//! the KKT conditions of that allocation to recover the set of beliefs that
//! could have produced it. The obfuscators here trade extra expected cost for
//! distance between the true belief and that reconstructed set, either with a
//! deterministic grid search or with a randomized policy from a small LP.

// Dense linear algebra reads better with explicit indices, and `!(a > b)`
// is used on purpose so that NaN falls on the rejecting side.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod filter;
pub mod model;
pub mod obfuscator;
pub mod privacy;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use model::{Action, Belief, ConstraintSet, Regime, Scenario};
