//! System definitions, flow computation in both time domains,
//! discretization of continuous-time systems, and convergence detection.

use crate::core::{CoreError, DomainBox, StateVector, TimeDomain, ToleranceConfig};
use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;
use thiserror::Error;

/// Evaluation rule x -> f(x). Output length must equal the system dimension.
pub type EvalFn = Arc<dyn Fn(&StateVector) -> Vec<f64> + Send + Sync>;
/// Analytic Jacobian x -> n x n matrix of partials df_i/dx_j.
pub type JacobianFn = Arc<dyn Fn(&StateVector) -> DMatrix<f64> + Send + Sync>;

/// Consecutive below-tolerance samples required before declaring convergence.
pub const CONFIRMATION_WINDOW: usize = 5;
/// Largest period searched for by recurrence detection.
pub const PERIOD_CAP: usize = 64;
/// Any component beyond this magnitude classifies the run as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("system `{label}`: evaluation returned {got} components, expected {expected}")]
    OutputDimension {
        label: String,
        expected: usize,
        got: usize,
    },
    #[error("system `{label}`: non-finite output component {value} at index {index}")]
    NonFiniteOutput {
        label: String,
        index: usize,
        value: f64,
    },
    #[error("operation requires a {expected} system, got {got}")]
    WrongTimeDomain {
        expected: TimeDomain,
        got: TimeDomain,
    },
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("discrete-time flow requires an integer time, got {0}")]
    NonIntegerTime(f64),
    #[error("step size must be strictly positive, got {0}")]
    NonPositiveStep(f64),
    #[error("stride {stride} is not a positive multiple of dt {dt}")]
    StrideNotMultiple { stride: f64, dt: f64 },
    #[error("state left the finite range during integration at time {time}")]
    NonFiniteState { time: f64 },
}

/// A dynamical system given by its evaluation rule: the vector field
/// x' = f(x) in continuous time, the map x(k+1) = f(x(k)) in discrete time.
#[derive(Clone)]
pub struct SystemDefinition {
    label: String,
    time_domain: TimeDomain,
    dim: usize,
    domain: DomainBox,
    eval: EvalFn,
    jacobian: Option<JacobianFn>,
    smooth: bool,
}

impl fmt::Debug for SystemDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemDefinition")
            .field("label", &self.label)
            .field("time_domain", &self.time_domain)
            .field("dim", &self.dim)
            .field("smooth", &self.smooth)
            .field("has_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl SystemDefinition {
    pub fn new(
        label: impl Into<String>,
        time_domain: TimeDomain,
        domain: DomainBox,
        eval: EvalFn,
    ) -> Self {
        let dim = domain.dim();
        SystemDefinition {
            label: label.into(),
            time_domain,
            dim,
            domain,
            eval,
            jacobian: None,
            smooth: true,
        }
    }

    pub fn continuous<F>(label: impl Into<String>, domain: DomainBox, f: F) -> Self
    where
        F: Fn(&StateVector) -> Vec<f64> + Send + Sync + 'static,
    {
        SystemDefinition::new(label, TimeDomain::Continuous, domain, Arc::new(f))
    }

    pub fn discrete<F>(label: impl Into<String>, domain: DomainBox, f: F) -> Self
    where
        F: Fn(&StateVector) -> Vec<f64> + Send + Sync + 'static,
    {
        SystemDefinition::new(label, TimeDomain::Discrete, domain, Arc::new(f))
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&StateVector) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Mark the evaluation rule as not continuously differentiable
    /// (max-plus and min-max operators). Verification then falls back to
    /// direct probing instead of Jacobian sign checks.
    pub fn non_smooth(mut self) -> Self {
        self.smooth = false;
        self
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn time_domain(&self) -> TimeDomain {
        self.time_domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn analytic_jacobian(&self, x: &StateVector) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(x))
    }

    /// f(x), with the output validated for dimension and finiteness.
    pub fn evaluate(&self, x: &StateVector) -> Result<StateVector, DynamicsError> {
        if x.dim() != self.dim {
            return Err(CoreError::DimensionMismatch {
                left: x.dim(),
                right: self.dim,
            }
            .into());
        }
        let out = (self.eval)(x);
        if out.len() != self.dim {
            return Err(DynamicsError::OutputDimension {
                label: self.label.clone(),
                expected: self.dim,
                got: out.len(),
            });
        }
        for (index, &value) in out.iter().enumerate() {
            if !value.is_finite() {
                return Err(DynamicsError::NonFiniteOutput {
                    label: self.label.clone(),
                    index,
                    value,
                });
            }
        }
        Ok(StateVector::new_unchecked(out))
    }
}

/// Fixed-step integration parameters for continuous-time systems:
/// `dt` is the integrator step, `stride` the sampling interval (a positive
/// multiple of `dt`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepConfig {
    pub dt: f64,
    pub stride: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 1e-2,
            stride: 1e-1,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(DynamicsError::NonPositiveStep(self.dt));
        }
        if !(self.stride > 0.0) || !self.stride.is_finite() {
            return Err(DynamicsError::NonPositiveStep(self.stride));
        }
        let ratio = self.stride / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(DynamicsError::StrideNotMultiple {
                stride: self.stride,
                dt: self.dt,
            });
        }
        Ok(())
    }
}

/// One classical fourth-order Runge-Kutta step of size dt.
pub fn step_ct(
    sys: &SystemDefinition,
    x: &StateVector,
    dt: f64,
) -> Result<StateVector, DynamicsError> {
    if sys.time_domain() != TimeDomain::Continuous {
        return Err(DynamicsError::WrongTimeDomain {
            expected: TimeDomain::Continuous,
            got: sys.time_domain(),
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    let combine = |x: &StateVector, k: &StateVector, h: f64| {
        StateVector::new_unchecked(
            x.iter()
                .zip(k.iter())
                .map(|(xi, ki)| xi + h * ki)
                .collect(),
        )
    };
    let k1 = sys.evaluate(x)?;
    let k2 = sys.evaluate(&combine(x, &k1, dt / 2.0))?;
    let k3 = sys.evaluate(&combine(x, &k2, dt / 2.0))?;
    let k4 = sys.evaluate(&combine(x, &k3, dt))?;
    let out: Vec<f64> = (0..x.dim())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    for (index, &value) in out.iter().enumerate() {
        if !value.is_finite() {
            return Err(DynamicsError::NonFiniteOutput {
                label: sys.label().to_string(),
                index,
                value,
            });
        }
    }
    Ok(StateVector::new_unchecked(out))
}

/// The flow phi(t, xi). Discrete time composes the map t times (t must be a
/// nonnegative integer); continuous time composes integrator steps of
/// `step.dt`, shortening the final partial step when dt does not divide t.
pub fn flow(
    sys: &SystemDefinition,
    xi: &StateVector,
    t: f64,
    step: &StepConfig,
) -> Result<StateVector, DynamicsError> {
    if t < 0.0 {
        return Err(DynamicsError::NegativeTime(t));
    }
    match sys.time_domain() {
        TimeDomain::Discrete => {
            let k = t.round();
            if (t - k).abs() > 1e-9 {
                return Err(DynamicsError::NonIntegerTime(t));
            }
            let mut x = xi.clone();
            for _ in 0..k as u64 {
                x = sys.evaluate(&x)?;
            }
            Ok(x)
        }
        TimeDomain::Continuous => {
            if !(step.dt > 0.0) || !step.dt.is_finite() {
                return Err(DynamicsError::NonPositiveStep(step.dt));
            }
            let ratio = t / step.dt;
            let (full_steps, remainder) = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0)
            {
                (ratio.round() as u64, 0.0)
            } else {
                let n = ratio.floor();
                (n as u64, t - n * step.dt)
            };
            let mut x = xi.clone();
            for _ in 0..full_steps {
                x = step_ct(sys, &x, step.dt)?;
            }
            if remainder > 0.0 {
                x = step_ct(sys, &x, remainder)?;
            }
            Ok(x)
        }
    }
}

/// The time-T map g = phi(T, .), packaged as a discrete-time system. The
/// sampled map carries no analytic Jacobian; integration failures surface
/// as non-finite outputs of the returned system.
pub fn discretize(
    sys: &SystemDefinition,
    sample_time: f64,
    dt: f64,
) -> Result<SystemDefinition, DynamicsError> {
    if sys.time_domain() != TimeDomain::Continuous {
        return Err(DynamicsError::WrongTimeDomain {
            expected: TimeDomain::Continuous,
            got: sys.time_domain(),
        });
    }
    let step = StepConfig {
        dt,
        stride: sample_time,
    };
    step.validate()?;
    let inner = sys.clone();
    let dim = sys.dim();
    let label = format!("{}|t={}", sys.label(), sample_time);
    let eval: EvalFn = Arc::new(move |x: &StateVector| {
        match flow(&inner, x, sample_time, &StepConfig { dt, stride: sample_time }) {
            Ok(out) => out.into(),
            Err(_) => vec![f64::NAN; dim],
        }
    });
    Ok(SystemDefinition::new(
        label,
        TimeDomain::Discrete,
        sys.domain().clone(),
        eval,
    ))
}

/// An ordered sequence of (time, state) samples from one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<StateVector>,
}

impl Trajectory {
    pub fn new() -> Self {
        Trajectory {
            times: Vec::new(),
            states: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, state: StateVector) -> Result<(), DynamicsError> {
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(DynamicsError::NegativeTime(t - last));
            }
        }
        if let Some(first) = self.states.first() {
            if first.dim() != state.dim() {
                return Err(CoreError::DimensionMismatch {
                    left: first.dim(),
                    right: state.dim(),
                }
                .into());
            }
        }
        self.times.push(t);
        self.states.push(state);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn last(&self) -> Option<(f64, &StateVector)> {
        match (self.times.last(), self.states.last()) {
            (Some(&t), Some(x)) => Some((t, x)),
            _ => None,
        }
    }

    /// CSV export: header `t,x_1,...,x_n`, one row per sample, values with
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let dim = self.states.first().map(|s| s.dim()).unwrap_or(0);
        write!(w, "t")?;
        for i in 1..=dim {
            write!(w, ",x_{i}")?;
        }
        writeln!(w)?;
        for (t, state) in self.times.iter().zip(self.states.iter()) {
            write!(w, "{}", fmt_g17(*t))?;
            for v in state.iter() {
                write!(w, ",{}", fmt_g17(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory::new()
    }
}

/// Format with 17 significant digits (full f64 round-trip precision).
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    Periodic,
    Diverged,
    HorizonExhausted,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Outcome::Converged => "converged",
            Outcome::Periodic => "periodic",
            Outcome::Diverged => "diverged",
            Outcome::HorizonExhausted => "horizon_exhausted",
        };
        write!(f, "{name}")
    }
}

/// Result of a convergence run. `iterations_or_time` is the iteration count
/// (discrete) or elapsed time (continuous) at which the reported outcome was
/// first established; for a converged run this is the start of the
/// confirmation window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub outcome: Outcome,
    pub limit: Option<StateVector>,
    pub period: Option<usize>,
    pub iterations_or_time: f64,
    pub final_residual: f64,
}

/// Iterates the map (discrete) or the stride-sampled flow (continuous,
/// via the time-stride map) until convergence, periodicity, divergence, or
/// the horizon. Convergence requires `CONFIRMATION_WINDOW` consecutive
/// below-tolerance steps and is checked before periodicity; period 1 is
/// reported as convergence, never as periodicity.
pub fn simulate_until_convergence(
    sys: &SystemDefinition,
    xi: &StateVector,
    cfg: &ToleranceConfig,
    step: &StepConfig,
) -> Result<ConvergenceReport, DynamicsError> {
    simulate_recorded(sys, xi, cfg, step).map(|(report, _)| report)
}

/// As [`simulate_until_convergence`], also returning the sampled trajectory.
pub fn simulate_recorded(
    sys: &SystemDefinition,
    xi: &StateVector,
    cfg: &ToleranceConfig,
    step: &StepConfig,
) -> Result<(ConvergenceReport, Trajectory), DynamicsError> {
    cfg.validate()?;
    let (sample_dt, max_samples) = match sys.time_domain() {
        TimeDomain::Discrete => (1.0, cfg.max_horizon.ceil() as usize),
        TimeDomain::Continuous => {
            step.validate()?;
            (step.stride, (cfg.max_horizon / step.stride).ceil() as usize)
        }
    };

    let mut traj = Trajectory::new();
    let mut current = xi.clone();
    traj.push(0.0, current.clone())?;
    let mut streak: usize = 0;
    let mut residual = f64::INFINITY;

    for k in 1..=max_samples {
        let t = k as f64 * sample_dt;
        let next = match sys.time_domain() {
            TimeDomain::Discrete => sys.evaluate(&current)?,
            TimeDomain::Continuous => flow(sys, &current, step.stride, step)?,
        };
        residual = next.sup_metric(&current)?;
        current = next;
        traj.push(t, current.clone())?;

        if current.max_abs() > DIVERGENCE_BOUND {
            return Ok((
                ConvergenceReport {
                    outcome: Outcome::Diverged,
                    limit: None,
                    period: None,
                    iterations_or_time: t,
                    final_residual: residual,
                },
                traj,
            ));
        }

        if residual < cfg.convergence_tol {
            streak += 1;
            if streak >= CONFIRMATION_WINDOW {
                let settled_at = (k + 1 - CONFIRMATION_WINDOW) as f64 * sample_dt;
                return Ok((
                    ConvergenceReport {
                        outcome: Outcome::Converged,
                        limit: Some(current.clone()),
                        period: None,
                        iterations_or_time: settled_at,
                        final_residual: residual,
                    },
                    traj,
                ));
            }
        } else {
            streak = 0;
        }

        if let Some(period) = detect_period(&traj, cfg) {
            return Ok((
                ConvergenceReport {
                    outcome: Outcome::Periodic,
                    limit: None,
                    period: Some(period),
                    iterations_or_time: t,
                    final_residual: residual,
                },
                traj,
            ));
        }
    }

    Ok((
        ConvergenceReport {
            outcome: Outcome::HorizonExhausted,
            limit: None,
            period: None,
            iterations_or_time: max_samples as f64 * sample_dt,
            final_residual: residual,
        },
        traj,
    ))
}

/// Smallest period p in [2, PERIOD_CAP] such that over the last
/// PERIOD_CAP + p samples every pair p apart agrees within the convergence
/// tolerance. A constant tail is convergence, not periodicity, and yields
/// None.
pub fn detect_period(traj: &Trajectory, cfg: &ToleranceConfig) -> Option<usize> {
    let states = traj.states();
    let n = states.len();
    let tol = cfg.convergence_tol;
    let close = |a: &StateVector, b: &StateVector| a.sup_metric(b).map(|d| d < tol).unwrap_or(false);

    // Constant tail check (period 1 means the orbit has settled).
    if n > PERIOD_CAP {
        let start = n - (PERIOD_CAP + 1);
        if (start..n - 1).all(|k| close(&states[k + 1], &states[k])) {
            return None;
        }
    }
    for p in 2..=PERIOD_CAP {
        let window = PERIOD_CAP + p;
        if n < window {
            break;
        }
        let start = n - window;
        if (start..n - p).all(|k| close(&states[k + p], &states[k])) {
            return Some(p);
        }
    }
    None
}

/// Runs the system from `guess` and returns the limit when the run converges
/// and the limit passes the equilibrium residual test: |f(x) - x|_inf for
/// maps, |f(x)|_inf for vector fields.
pub fn find_equilibrium(
    sys: &SystemDefinition,
    guess: &StateVector,
    cfg: &ToleranceConfig,
    step: &StepConfig,
) -> Result<Option<StateVector>, DynamicsError> {
    let report = simulate_until_convergence(sys, guess, cfg, step)?;
    if report.outcome != Outcome::Converged {
        return Ok(None);
    }
    let x = report.limit.expect("converged report carries a limit");
    let residual = equilibrium_residual(sys, &x)?;
    Ok(if residual < cfg.eq_tol { Some(x) } else { None })
}

/// |f(x) - x|_inf for discrete-time systems, |f(x)|_inf for continuous-time.
pub fn equilibrium_residual(
    sys: &SystemDefinition,
    x: &StateVector,
) -> Result<f64, DynamicsError> {
    let fx = sys.evaluate(x)?;
    Ok(match sys.time_domain() {
        TimeDomain::Discrete => fx.sup_metric(x)?,
        TimeDomain::Continuous => fx.max_abs(),
    })
}
