//! Privacy scores of an action against the adversary's reconstruction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversary::{build_polytope, SINGLETON_TOL};
use crate::error::{Error, Result};
use crate::model::{Action, Belief, Scenario};

/// How maximal obfuscation scores an action whose reconstruction is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptySetPolicy {
    /// Negative infinity: the action is unusable.
    #[default]
    Worst,
    /// Positive infinity: the adversary learns nothing.
    Best,
}

impl FromStr for EmptySetPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "worst" => Ok(EmptySetPolicy::Worst),
            "best" => Ok(EmptySetPolicy::Best),
            other => Err(Error::Config(format!("unknown empty-set policy `{other}` (worst|best)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrivacyMeasure {
    /// 0 when no belief rationalizes the action.
    Infeasibility,
    /// 0 when the reconstruction holds some belief other than the true one.
    NonUniqueness,
    /// 0 when the true belief is outside the reconstruction.
    NonExistence,
    /// Minus the distance from a decoy belief to the reconstruction.
    DesiredObfuscation(Belief),
    /// Distance from the true belief to the reconstruction.
    MaximalObfuscation(EmptySetPolicy),
}

impl PrivacyMeasure {
    pub fn maximal() -> Self {
        PrivacyMeasure::MaximalObfuscation(EmptySetPolicy::Worst)
    }

    /// Parses `infeasible|nonunique|nonexist|desired|maximal`. `desired`
    /// needs a decoy belief.
    pub fn parse(name: &str, desired: Option<Belief>, empty_set: EmptySetPolicy) -> Result<Self> {
        match name {
            "infeasible" => Ok(PrivacyMeasure::Infeasibility),
            "nonunique" => Ok(PrivacyMeasure::NonUniqueness),
            "nonexist" => Ok(PrivacyMeasure::NonExistence),
            "desired" => desired
                .map(PrivacyMeasure::DesiredObfuscation)
                .ok_or_else(|| Error::Config("measure `desired` requires a desired belief".into())),
            "maximal" => Ok(PrivacyMeasure::MaximalObfuscation(empty_set)),
            other => Err(Error::Config(format!(
                "unknown privacy measure `{other}` (infeasible|nonunique|nonexist|desired|maximal)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PrivacyMeasure::Infeasibility => "infeasible",
            PrivacyMeasure::NonUniqueness => "nonunique",
            PrivacyMeasure::NonExistence => "nonexist",
            PrivacyMeasure::DesiredObfuscation(_) => "desired",
            PrivacyMeasure::MaximalObfuscation(_) => "maximal",
        }
    }
}

/// Extended-real privacy score; larger is more private.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrivacyValue(pub f64);

impl PrivacyValue {
    pub const NEG_INF: PrivacyValue = PrivacyValue(f64::NEG_INFINITY);
    pub const POS_INF: PrivacyValue = PrivacyValue(f64::INFINITY);
    pub const ZERO: PrivacyValue = PrivacyValue(0.0);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_neg_inf(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    fn indicator(ok: bool) -> Self {
        if ok {
            PrivacyValue::ZERO
        } else {
            PrivacyValue::NEG_INF
        }
    }
}

impl fmt::Display for PrivacyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn evaluate(measure: &PrivacyMeasure, scenario: &Scenario, u: &Action, pi_true: &Belief) -> Result<PrivacyValue> {
    let poly = build_polytope(scenario, u)?;
    match measure {
        PrivacyMeasure::Infeasibility => Ok(PrivacyValue::indicator(poly.is_empty()?)),
        PrivacyMeasure::NonUniqueness => {
            if poly.is_empty()? {
                return Ok(PrivacyValue::NEG_INF);
            }
            let ranges = poly.coordinate_ranges()?;
            let singleton = ranges.iter().all(|(lo, hi)| hi - lo <= SINGLETON_TOL);
            if !singleton {
                return Ok(PrivacyValue::ZERO);
            }
            let differs = ranges
                .iter()
                .zip(pi_true.probs())
                .any(|((lo, hi), p)| (0.5 * (lo + hi) - p).abs() > SINGLETON_TOL);
            Ok(PrivacyValue::indicator(differs))
        }
        PrivacyMeasure::NonExistence => {
            if poly.is_empty()? {
                return Ok(PrivacyValue::ZERO);
            }
            Ok(PrivacyValue::indicator(!poly.contains(pi_true)?))
        }
        PrivacyMeasure::DesiredObfuscation(desired) => match poly.distance(desired) {
            Ok(d) => Ok(PrivacyValue(-d)),
            Err(Error::EmptyPolytope) => Ok(PrivacyValue::NEG_INF),
            Err(e) => Err(e),
        },
        PrivacyMeasure::MaximalObfuscation(policy) => match poly.distance(pi_true) {
            Ok(d) => Ok(PrivacyValue(d)),
            Err(Error::EmptyPolytope) => Ok(match policy {
                EmptySetPolicy::Worst => PrivacyValue::NEG_INF,
                EmptySetPolicy::Best => PrivacyValue::POS_INF,
            }),
            Err(e) => Err(e),
        },
    }
}
