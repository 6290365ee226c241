//! State vectors, the componentwise partial order, the sup-metric, and
//! tolerance configuration shared by the other modules.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Index;
use thiserror::Error;

/// Whether a system evolves in continuous or discrete time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDomain {
    Continuous,
    Discrete,
}

impl fmt::Display for TimeDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeDomain::Continuous => write!(f, "continuous"),
            TimeDomain::Discrete => write!(f, "discrete"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("state vector must have at least one component")]
    Empty,
    #[error("non-finite component {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("domain box needs lower[{index}] < upper[{index}], got [{lower}, {upper}]")]
    EmptyInterior { index: usize, lower: f64, upper: f64 },
    #[error("tolerance `{name}` must be strictly positive, got {value}")]
    NonPositiveTolerance { name: &'static str, value: f64 },
    #[error("strict_margin ({strict_margin}) must be at least eq_tol ({eq_tol})")]
    MarginBelowEqTol { strict_margin: f64, eq_tol: f64 },
}

/// A point in Rⁿ with n >= 1 finite components.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(components: Vec<f64>) -> Result<Self, CoreError> {
        if components.is_empty() {
            return Err(CoreError::Empty);
        }
        for (index, &value) in components.iter().enumerate() {
            if !value.is_finite() {
                return Err(CoreError::NonFinite { index, value });
            }
        }
        Ok(StateVector(components))
    }

    /// Constructor for values already known to be finite.
    pub(crate) fn new_unchecked(components: Vec<f64>) -> Self {
        debug_assert!(!components.is_empty());
        debug_assert!(components.iter().all(|v| v.is_finite()));
        StateVector(components)
    }

    /// The vector c·1.
    pub fn constant(value: f64, dim: usize) -> Result<Self, CoreError> {
        StateVector::new(vec![value; dim])
    }

    pub fn zeros(dim: usize) -> Result<Self, CoreError> {
        StateVector::constant(0.0, dim)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    fn check_dim(&self, other: &StateVector) -> Result<(), CoreError> {
        if self.dim() != other.dim() {
            return Err(CoreError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }

    /// Componentwise partial order: true iff self_i <= other_i for all i.
    /// Comparisons are exact; tolerances never enter order checks on inputs.
    pub fn partial_leq(&self, other: &StateVector) -> Result<bool, CoreError> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(other.0.iter()).all(|(a, b)| a <= b))
    }

    /// Sup-metric max_i |self_i - other_i|.
    pub fn sup_metric(&self, other: &StateVector) -> Result<f64, CoreError> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// The rigid translation self + alpha·1.
    pub fn translate(&self, alpha: f64) -> StateVector {
        StateVector::new_unchecked(self.0.iter().map(|v| v + alpha).collect())
    }

    /// max_i x_i - min_i x_i; zero exactly on consensus points alpha·1.
    pub fn width(&self) -> f64 {
        let max = self.0.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let min = self.0.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        max - min
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.dim() as f64
    }
}

impl Index<usize> for StateVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<StateVector> for Vec<f64> {
    fn from(x: StateVector) -> Vec<f64> {
        x.0
    }
}

impl TryFrom<Vec<f64>> for StateVector {
    type Error = CoreError;
    fn try_from(v: Vec<f64>) -> Result<Self, CoreError> {
        StateVector::new(v)
    }
}

impl<'a> IntoIterator for &'a StateVector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// An axis-aligned box with nonempty interior, a convex under-approximation
/// of the state space. Unbounded sides carry +/- infinity markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, CoreError> {
        if lower.is_empty() {
            return Err(CoreError::Empty);
        }
        if lower.len() != upper.len() {
            return Err(CoreError::DimensionMismatch {
                left: lower.len(),
                right: upper.len(),
            });
        }
        for (index, (&lo, &hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() {
                return Err(CoreError::NonFinite { index, value: lo });
            }
            if hi.is_nan() {
                return Err(CoreError::NonFinite { index, value: hi });
            }
            if !(lo < hi) {
                return Err(CoreError::EmptyInterior {
                    index,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(DomainBox { lower, upper })
    }

    /// The box [lo, hi]ⁿ.
    pub fn uniform(lo: f64, hi: f64, dim: usize) -> Result<Self, CoreError> {
        DomainBox::new(vec![lo; dim], vec![hi; dim])
    }

    /// All of Rⁿ.
    pub fn unbounded(dim: usize) -> Self {
        DomainBox {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &StateVector) -> Result<bool, CoreError> {
        if x.dim() != self.dim() {
            return Err(CoreError::DimensionMismatch {
                left: x.dim(),
                right: self.dim(),
            });
        }
        Ok(x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(&v, (&lo, &hi))| lo <= v && v <= hi))
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().all(|v| v.is_finite()) && self.upper.iter().all(|v| v.is_finite())
    }

    /// Largest side length; infinite for unbounded boxes.
    pub fn max_side(&self) -> f64 {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max)
    }
}

/// Tolerances shared by simulation and verification.
///
/// `max_horizon` counts iterations for discrete-time systems and elapsed
/// time for continuous-time systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub eq_tol: f64,
    pub strict_margin: f64,
    pub fd_step: f64,
    pub convergence_tol: f64,
    pub max_horizon: f64,
}

impl ToleranceConfig {
    /// Defaults for exact discrete-time maps.
    pub fn discrete() -> Self {
        ToleranceConfig {
            eq_tol: 1e-9,
            strict_margin: 1e-7,
            fd_step: 1e-6,
            convergence_tol: 1e-9,
            max_horizon: 10_000.0,
        }
    }

    /// Defaults for integrated continuous-time flows, which carry more
    /// numerical noise than exact maps.
    pub fn continuous() -> Self {
        ToleranceConfig {
            eq_tol: 1e-6,
            strict_margin: 1e-3,
            fd_step: 1e-6,
            convergence_tol: 1e-9,
            max_horizon: 100.0,
        }
    }

    pub fn for_domain(domain: TimeDomain) -> Self {
        match domain {
            TimeDomain::Continuous => ToleranceConfig::continuous(),
            TimeDomain::Discrete => ToleranceConfig::discrete(),
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let fields = [
            ("eq_tol", self.eq_tol),
            ("strict_margin", self.strict_margin),
            ("fd_step", self.fd_step),
            ("convergence_tol", self.convergence_tol),
            ("max_horizon", self.max_horizon),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(CoreError::NonPositiveTolerance { name, value });
            }
        }
        if self.strict_margin < self.eq_tol {
            return Err(CoreError::MarginBelowEqTol {
                strict_margin: self.strict_margin,
                eq_tol: self.eq_tol,
            });
        }
        Ok(())
    }
}
