// Validation guards are written as !(x > 0.0) so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Simulation, structural verification, and consensus analysis of monotone
//! plus-homogeneous ("topical") dynamical systems in continuous and
//! discrete time.
//!
//! The crate is organized around five modules:
//!
//! - [`core`] - state vectors, the componentwise partial order, the
//!   sup-metric, domain boxes, and tolerance configuration;
//! - [`dynamics`] - system definitions, fixed-step fourth-order integration,
//!   flows, time-discretization, and convergence/period detection;
//! - [`verify`] - sampled structural checks (Metzler / nonnegative Jacobian
//!   sign structure, plus-homogeneity, direct order probing) and flow-level
//!   property testing, aggregated into a topicality classification;
//! - [`mas`] - directed interaction graphs, assembly of multi-agent systems
//!   from per-agent local rules, consensus conditions, and consensus runs;
//! - [`models`] - constructors for the bundled example systems (linear and
//!   saturated consensus protocols, coupled oscillators, max-plus and
//!   smoothed max-plus maps, dynamic-programming min-max operators, reduced
//!   reaction networks) plus the exp/log conjugation to the positive orthant.

pub mod core;
pub mod dynamics;
pub mod mas;
pub mod models;
pub mod verify;

pub use crate::core::{DomainBox, StateVector, TimeDomain, ToleranceConfig};
pub use crate::dynamics::{
    ConvergenceReport, Outcome, StepConfig, SystemDefinition, Trajectory,
};
pub use crate::verify::{SamplePlan, VerificationReport, Verdict};
