//! Structural verification of monotonicity, type-K monotonicity, and
//! plus-homogeneity from the evaluation rule (Jacobian sign structure and
//! direct order probing), plus randomized flow-level property testing.
//!
//! All sampling is deterministic given the plan seed. Passes are
//! sample-based and only certify the sampled points; failures come with
//! re-checkable witnesses.

use crate::core::{CoreError, DomainBox, StateVector, TimeDomain, ToleranceConfig};
use crate::dynamics::{flow, DynamicsError, StepConfig, SystemDefinition};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("sampling requires a bounded box")]
    UnboundedBox,
    #[error("invalid sample plan: {0}")]
    BadPlan(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Deterministic sampling plan: where to sample, how many points and
/// ordered pairs, the seed all randomness flows from, and the translation
/// amounts used by plus-homogeneity checks. `probe_points` are
/// user-declared states at which strict-diagonal checks must hold
/// unconditionally.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePlan {
    #[serde(rename = "box")]
    pub sample_box: DomainBox,
    pub n_points: usize,
    pub n_pairs: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub probe_points: Vec<Vec<f64>>,
}

impl SamplePlan {
    pub fn new(
        sample_box: DomainBox,
        n_points: usize,
        n_pairs: usize,
        seed: u64,
    ) -> Result<Self, VerifyError> {
        if !sample_box.is_bounded() {
            return Err(VerifyError::UnboundedBox);
        }
        if n_points == 0 || n_pairs == 0 {
            return Err(VerifyError::BadPlan(
                "n_points and n_pairs must be at least 1".into(),
            ));
        }
        Ok(SamplePlan {
            sample_box,
            n_points,
            n_pairs,
            seed,
            alphas: vec![-1.0, 0.5, 1.0],
            probe_points: Vec::new(),
        })
    }

    pub fn with_alphas(mut self, alphas: Vec<f64>) -> Self {
        self.alphas = alphas;
        self
    }

    pub fn with_probe_points(mut self, probe_points: Vec<Vec<f64>>) -> Self {
        self.probe_points = probe_points;
        self
    }

    /// Uniform points in the plan box.
    pub fn sample_points(&self) -> Vec<StateVector> {
        let mut rng = rng_for(self.seed, "points");
        (0..self.n_points)
            .map(|_| uniform_in_box(&self.sample_box, &mut rng))
            .collect()
    }

    /// Ordered pairs a <= b. The gap is a nonnegative random vector with a
    /// random nonempty subset of exactly-zero (tied) components, so both
    /// tie conditions and strict orderings get exercised.
    pub fn sample_pairs(&self) -> Vec<(StateVector, StateVector)> {
        let mut rng = rng_for(self.seed, "pairs");
        let dim = self.sample_box.dim();
        let upper = self.sample_box.upper().to_vec();
        (0..self.n_pairs)
            .map(|_| {
                let a = uniform_in_box(&self.sample_box, &mut rng);
                let mut tied = vec![false; dim];
                for t in tied.iter_mut() {
                    *t = rng.gen_bool(0.5);
                }
                if !tied.iter().any(|&t| t) {
                    let k = rng.gen_range(0..dim);
                    tied[k] = true;
                }
                let b: Vec<f64> = (0..dim)
                    .map(|i| {
                        if tied[i] {
                            a[i]
                        } else {
                            a[i] + rng.gen_range(0.0..1.0) * (upper[i] - a[i])
                        }
                    })
                    .collect();
                (a, StateVector::new_unchecked(b))
            })
            .collect()
    }
}

fn uniform_in_box(sample_box: &DomainBox, rng: &mut ChaCha8Rng) -> StateVector {
    let coords: Vec<f64> = sample_box
        .lower()
        .iter()
        .zip(sample_box.upper().iter())
        .map(|(&lo, &hi)| lo + rng.gen_range(0.0..1.0) * (hi - lo))
        .collect();
    StateVector::new_unchecked(coords)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a named sub-seed so that every component draws from its own
/// stream of the single plan seed.
pub fn subseed(seed: u64, tag: &str) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &byte in tag.as_bytes() {
        state = state.wrapping_add(u64::from(byte));
        out ^= splitmix64(&mut state);
    }
    out
}

fn rng_for(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(subseed(seed, tag))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// A re-checkable record of one observed violation: re-evaluating the
/// system at `points` reproduces `observed`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub points: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub observed: f64,
    /// How far past the tolerance the observation lies.
    pub margin: f64,
    pub description: String,
}

const MAX_WITNESSES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub verdict: Verdict,
    /// Passes certify only the sampled points; failures are certain.
    pub sample_based: bool,
    pub samples_checked: usize,
    pub violations: usize,
    pub witnesses: Vec<Witness>,
    pub note: String,
}

impl CheckReport {
    fn from_witnesses(
        name: &str,
        samples_checked: usize,
        mut witnesses: Vec<Witness>,
        note: String,
    ) -> Self {
        let violations = witnesses.len();
        witnesses.truncate(MAX_WITNESSES);
        CheckReport {
            name: name.to_string(),
            verdict: if violations == 0 {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            sample_based: true,
            samples_checked,
            violations,
            witnesses,
            note,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Aggregated report: per-check verdicts plus the plan and tolerances that
/// produced them. Identical seed, plan, and tolerances reproduce the report
/// byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub label: String,
    pub time_domain: TimeDomain,
    pub verdict: Verdict,
    pub checks: Vec<CheckReport>,
    pub plan: SamplePlan,
    pub tolerances: ToleranceConfig,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Central-difference Jacobian estimate with per-column step
/// h_j = fd_step * max(1, |x_j|). The probe points x +/- h e_j should stay
/// inside the domain of definition of the evaluation rule.
pub fn numeric_jacobian(
    sys: &SystemDefinition,
    x: &StateVector,
    fd_step: f64,
) -> Result<DMatrix<f64>, VerifyError> {
    let n = sys.dim();
    let mut jac = DMatrix::zeros(n, n);
    let base: Vec<f64> = x.as_slice().to_vec();
    for j in 0..n {
        let h = fd_step * x[j].abs().max(1.0);
        let mut plus = base.clone();
        plus[j] += h;
        let mut minus = base.clone();
        minus[j] -= h;
        let f_plus = sys.evaluate(&StateVector::new_unchecked(plus))?;
        let f_minus = sys.evaluate(&StateVector::new_unchecked(minus))?;
        for i in 0..n {
            jac[(i, j)] = (f_plus[i] - f_minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Analytic Jacobian when the system carries one, finite differences
/// otherwise. The flag reports which route was taken.
fn jacobian_at(
    sys: &SystemDefinition,
    x: &StateVector,
    cfg: &ToleranceConfig,
) -> Result<(DMatrix<f64>, bool), VerifyError> {
    match sys.analytic_jacobian(x) {
        Some(j) => Ok((j, true)),
        None => Ok((numeric_jacobian(sys, x, cfg.fd_step)?, false)),
    }
}

fn require_domain(sys: &SystemDefinition, expected: TimeDomain) -> Result<(), VerifyError> {
    if sys.time_domain() != expected {
        return Err(VerifyError::Dynamics(DynamicsError::WrongTimeDomain {
            expected,
            got: sys.time_domain(),
        }));
    }
    Ok(())
}

/// Off-diagonal Jacobian sign check for continuous-time systems: the
/// necessary and sufficient structural condition for (type-K)
/// monotonicity of smooth vector fields.
pub fn check_metzler_ct(
    sys: &SystemDefinition,
    plan: &SamplePlan,
    cfg: &ToleranceConfig,
) -> Result<CheckReport, VerifyError> {
    require_domain(sys, TimeDomain::Continuous)?;
    let points = plan.sample_points();
    let mut witnesses = Vec::new();
    let mut analytic = false;
    for x in &points {
        let (jac, used_analytic) = jacobian_at(sys, x, cfg)?;
        analytic |= used_analytic;
        for i in 0..sys.dim() {
            for j in 0..sys.dim() {
                if i != j && jac[(i, j)] < -cfg.eq_tol {
                    witnesses.push(Witness {
                        points: vec![x.as_slice().to_vec()],
                        entry: Some([i, j]),
                        component: None,
                        alpha: None,
                        observed: jac[(i, j)],
                        margin: -jac[(i, j)] - cfg.eq_tol,
                        description: format!(
                            "off-diagonal J[{i}][{j}] = {} < -{}",
                            jac[(i, j)],
                            cfg.eq_tol
                        ),
                    });
                }
            }
        }
    }
    Ok(CheckReport::from_witnesses(
        "metzler_ct",
        points.len(),
        witnesses,
        format!(
            "off-diagonal partials >= -eq_tol at every sampled point ({} jacobians)",
            if analytic { "analytic" } else { "finite-difference" }
        ),
    ))
}

/// Discrete-time structural condition: nonnegative Jacobian everywhere
/// with a strictly positive diagonal almost everywhere. "Almost
/// everywhere" is operationalized as strictly positive at >= 99% of
/// sampled points and at every declared probe point.
pub fn check_nonneg_posdiag_dt(
    sys: &SystemDefinition,
    plan: &SamplePlan,
    cfg: &ToleranceConfig,
) -> Result<CheckReport, VerifyError> {
    require_domain(sys, TimeDomain::Discrete)?;
    let points = plan.sample_points();
    let mut witnesses = Vec::new();
    let mut flat_diag_points = 0usize;
    let mut flat_diag_example: Option<Witness> = None;
    for x in &points {
        let (jac, _) = jacobian_at(sys, x, cfg)?;
        for i in 0..sys.dim() {
            for j in 0..sys.dim() {
                if jac[(i, j)] < -cfg.eq_tol {
                    witnesses.push(Witness {
                        points: vec![x.as_slice().to_vec()],
                        entry: Some([i, j]),
                        component: None,
                        alpha: None,
                        observed: jac[(i, j)],
                        margin: -jac[(i, j)] - cfg.eq_tol,
                        description: format!(
                            "J[{i}][{j}] = {} < -{}",
                            jac[(i, j)],
                            cfg.eq_tol
                        ),
                    });
                }
            }
        }
        if let Some(i) = (0..sys.dim()).find(|&i| jac[(i, i)] <= cfg.strict_margin) {
            flat_diag_points += 1;
            if flat_diag_example.is_none() {
                flat_diag_example = Some(Witness {
                    points: vec![x.as_slice().to_vec()],
                    entry: Some([i, i]),
                    component: None,
                    alpha: None,
                    observed: jac[(i, i)],
                    margin: cfg.strict_margin - jac[(i, i)],
                    description: format!(
                        "diagonal J[{i}][{i}] = {} <= strict_margin {}",
                        jac[(i, i)],
                        cfg.strict_margin
                    ),
                });
            }
        }
    }
    let allowed = points.len() / 100;
    let positive_fraction = 100.0 * (points.len() - flat_diag_points) as f64 / points.len() as f64;
    if flat_diag_points > allowed {
        if let Some(w) = flat_diag_example {
            witnesses.push(w);
        }
    }
    // Declared probe points must have a strictly positive diagonal with no
    // tolerance for exceptions.
    for raw in &plan.probe_points {
        let x = StateVector::new(raw.clone())?;
        let (jac, _) = jacobian_at(sys, &x, cfg)?;
        for i in 0..sys.dim() {
            if jac[(i, i)] <= cfg.strict_margin {
                witnesses.push(Witness {
                    points: vec![raw.clone()],
                    entry: Some([i, i]),
                    component: None,
                    alpha: None,
                    observed: jac[(i, i)],
                    margin: cfg.strict_margin - jac[(i, i)],
                    description: format!(
                        "probe point has diagonal J[{i}][{i}] = {} <= strict_margin {}",
                        jac[(i, i)],
                        cfg.strict_margin
                    ),
                });
            }
        }
    }
    Ok(CheckReport::from_witnesses(
        "nonneg_posdiag_dt",
        points.len(),
        witnesses,
        format!(
            "nonnegative entries at every sampled point; diagonal > strict_margin at {positive_fraction:.1}% of points (a.e. proxy requires >= 99%)"
        ),
    ))
}

/// Plus-homogeneity of the evaluation rule: a vector field must satisfy
/// f(x + a*1) = f(x); a map must satisfy f(x + a*1) = f(x) + a*1.
pub fn check_plus_homogeneity(
    sys: &SystemDefinition,
    plan: &SamplePlan,
    cfg: &ToleranceConfig,
) -> Result<CheckReport, VerifyError> {
    let points = plan.sample_points();
    let mut witnesses = Vec::new();
    for x in &points {
        let fx = sys.evaluate(x)?;
        for &alpha in &plan.alphas {
            let shifted = sys.evaluate(&x.translate(alpha))?;
            let expected = match sys.time_domain() {
                TimeDomain::Continuous => fx.clone(),
                TimeDomain::Discrete => fx.translate(alpha),
            };
            let defect = shifted.sup_metric(&expected)?;
            if defect >= cfg.eq_tol {
                witnesses.push(Witness {
                    points: vec![x.as_slice().to_vec()],
                    entry: None,
                    component: None,
                    alpha: Some(alpha),
                    observed: defect,
                    margin: defect - cfg.eq_tol,
                    description: format!(
                        "translation defect |f(x+a*1) - expected|_inf = {defect} for a = {alpha}"
                    ),
                });
            }
        }
    }
    Ok(CheckReport::from_witnesses(
        "plus_homogeneity",
        points.len() * plan.alphas.len(),
        witnesses,
        format!("translation amounts {:?}", plan.alphas),
    ))
}

/// Direct probing of the tie condition characterizing continuous-time
/// monotonicity: ordered pairs a <= b with tied components a_i = b_i must
/// satisfy f_i(a) <= f_i(b).
pub fn check_kamke_direct(
    sys: &SystemDefinition,
    plan: &SamplePlan,
    cfg: &ToleranceConfig,
) -> Result<CheckReport, VerifyError> {
    require_domain(sys, TimeDomain::Continuous)?;
    let pairs = plan.sample_pairs();
    let mut witnesses = Vec::new();
    for (a, b) in &pairs {
        let fa = sys.evaluate(a)?;
        let fb = sys.evaluate(b)?;
        for i in 0..sys.dim() {
            if a[i] == b[i] && fa[i] > fb[i] + cfg.eq_tol {
                witnesses.push(Witness {
                    points: vec![a.as_slice().to_vec(), b.as_slice().to_vec()],
                    entry: None,
                    component: Some(i),
                    alpha: None,
                    observed: fa[i] - fb[i],
                    margin: fa[i] - fb[i] - cfg.eq_tol,
                    description: format!(
                        "tied component {i}: f_i(a) = {} > f_i(b) = {}",
                        fa[i], fb[i]
                    ),
                });
            }
        }
    }
    Ok(CheckReport::from_witnesses(
        "kamke_direct",
        pairs.len(),
        witnesses,
        "ordered pairs with exact ties on a random component subset".to_string(),
    ))
}

/// Row sums of the Jacobian of a discrete-time map: plus-homogeneous smooth
/// maps have row-stochastic Jacobians.
pub fn check_row_stochastic(
    sys: &SystemDefinition,
    plan: &SamplePlan,
    cfg: &ToleranceConfig,
) -> Result<CheckReport, VerifyError> {
    require_domain(sys, TimeDomain::Discrete)?;
    let tol = 10.0 * cfg.eq_tol;
    let points = plan.sample_points();
    let mut witnesses = Vec::new();
    let mut max_dev: f64 = 0.0;
    for x in &points {
        let (jac, _) = jacobian_at(sys, x, cfg)?;
        for i in 0..sys.dim() {
            let row_sum: f64 = (0..sys.dim()).map(|j| jac[(i, j)]).sum();
            let dev = (row_sum - 1.0).abs();
            max_dev = max_dev.max(dev);
            if dev >= tol {
                witnesses.push(Witness {
                    points: vec![x.as_slice().to_vec()],
                    entry: None,
                    component: Some(i),
                    alpha: None,
                    observed: row_sum,
                    margin: dev - tol,
                    description: format!("row {i} sums to {row_sum}, expected 1"),
                });
            }
        }
    }
    Ok(CheckReport::from_witnesses(
        "row_stochastic",
        points.len(),
        witnesses,
        format!("max |row sum - 1| = {max_dev:.3e}"),
    ))
}

/// Direct order-preservation probing for discrete-time maps (used when the
/// map is not continuously differentiable): a <= b must give f(a) <= f(b).
pub fn check_monotone_probe_dt(
    sys: &SystemDefinition,
    plan: &SamplePlan,
    cfg: &ToleranceConfig,
) -> Result<CheckReport, VerifyError> {
    require_domain(sys, TimeDomain::Discrete)?;
    let pairs = plan.sample_pairs();
    let mut witnesses = Vec::new();
    for (a, b) in &pairs {
        let fa = sys.evaluate(a)?;
        let fb = sys.evaluate(b)?;
        for i in 0..sys.dim() {
            if fa[i] > fb[i] + cfg.eq_tol {
                witnesses.push(Witness {
                    points: vec![a.as_slice().to_vec(), b.as_slice().to_vec()],
                    entry: None,
                    component: Some(i),
                    alpha: None,
                    observed: fa[i] - fb[i],
                    margin: fa[i] - fb[i] - cfg.eq_tol,
                    description: format!(
                        "component {i}: f_i(a) = {} > f_i(b) = {} for a <= b",
                        fa[i], fb[i]
                    ),
                });
            }
        }
    }
    Ok(CheckReport::from_witnesses(
        "monotone_probe",
        pairs.len(),
        witnesses,
        "ordered-pair probing of the map".to_string(),
    ))
}

/// Strict-order preservation probing for discrete-time maps: components with
/// a_i < b_i beyond the strict margin must keep a strictly larger image.
pub fn check_type_k_probe_dt(
    sys: &SystemDefinition,
    plan: &SamplePlan,
    cfg: &ToleranceConfig,
) -> Result<CheckReport, VerifyError> {
    require_domain(sys, TimeDomain::Discrete)?;
    let pairs = plan.sample_pairs();
    let mut witnesses = Vec::new();
    for (a, b) in &pairs {
        let fa = sys.evaluate(a)?;
        let fb = sys.evaluate(b)?;
        for i in 0..sys.dim() {
            if a[i] + cfg.strict_margin < b[i] && fb[i] - fa[i] <= cfg.eq_tol {
                witnesses.push(Witness {
                    points: vec![a.as_slice().to_vec(), b.as_slice().to_vec()],
                    entry: None,
                    component: Some(i),
                    alpha: None,
                    observed: fb[i] - fa[i],
                    margin: cfg.eq_tol - (fb[i] - fa[i]),
                    description: format!(
                        "strictly ordered component {i} collapsed: f_i(b) - f_i(a) = {}",
                        fb[i] - fa[i]
                    ),
                });
            }
        }
    }
    Ok(CheckReport::from_witnesses(
        "type_k_probe",
        pairs.len(),
        witnesses,
        "strict-order preservation probing of the map".to_string(),
    ))
}

/// Compares a declared analytic Jacobian against the central-difference
/// estimate at sampled points.
pub fn check_jacobian_consistency(
    sys: &SystemDefinition,
    plan: &SamplePlan,
    cfg: &ToleranceConfig,
) -> Result<CheckReport, VerifyError> {
    if !sys.has_jacobian() {
        return Ok(CheckReport {
            name: "jacobian_consistency".into(),
            verdict: Verdict::Inconclusive,
            sample_based: true,
            samples_checked: 0,
            violations: 0,
            witnesses: Vec::new(),
            note: "no analytic jacobian declared".into(),
        });
    }
    let points = plan.sample_points();
    let mut witnesses = Vec::new();
    for x in &points {
        let analytic = sys.analytic_jacobian(x).expect("checked above");
        let numeric = numeric_jacobian(sys, x, cfg.fd_step)?;
        for i in 0..sys.dim() {
            for j in 0..sys.dim() {
                let diff = (analytic[(i, j)] - numeric[(i, j)]).abs();
                let tol = 1e-5 * analytic[(i, j)].abs().max(1.0);
                if diff > tol {
                    witnesses.push(Witness {
                        points: vec![x.as_slice().to_vec()],
                        entry: Some([i, j]),
                        component: None,
                        alpha: None,
                        observed: diff,
                        margin: diff - tol,
                        description: format!(
                            "analytic J[{i}][{j}] = {} vs finite-difference {}",
                            analytic[(i, j)],
                            numeric[(i, j)]
                        ),
                    });
                }
            }
        }
    }
    Ok(CheckReport::from_witnesses(
        "jacobian_consistency",
        points.len(),
        witnesses,
        "analytic vs central-difference Jacobians".to_string(),
    ))
}

/// Flow-level property testing: evolves sampled ordered pairs and
/// translated copies up to the horizon and checks, at every sample time,
/// (m) order preservation, (k) strict-order preservation, (p) flow
/// plus-homogeneity, and (n) nonexpansiveness in the sup-metric.
pub fn test_flow_properties(
    sys: &SystemDefinition,
    plan: &SamplePlan,
    horizon: f64,
    cfg: &ToleranceConfig,
    step: &StepConfig,
) -> Result<VerificationReport, VerifyError> {
    let sample_dt = match sys.time_domain() {
        TimeDomain::Discrete => 1.0,
        TimeDomain::Continuous => {
            step.validate()?;
            step.stride
        }
    };
    let n_samples = (horizon / sample_dt).round().max(1.0) as usize;
    let advance = |x: &StateVector| -> Result<StateVector, VerifyError> {
        Ok(match sys.time_domain() {
            TimeDomain::Discrete => sys.evaluate(x)?,
            TimeDomain::Continuous => flow(sys, x, step.stride, step)?,
        })
    };

    let pairs = plan.sample_pairs();
    let mut mono_witnesses = Vec::new();
    let mut strict_witnesses = Vec::new();
    let mut ne_witnesses = Vec::new();
    let mut ph_witnesses = Vec::new();

    for (xi1, xi2) in &pairs {
        let d0 = xi1.sup_metric(xi2)?;
        let strict: Vec<usize> = (0..sys.dim())
            .filter(|&i| xi1[i] + cfg.strict_margin < xi2[i])
            .collect();
        let mut a = xi1.clone();
        let mut b = xi2.clone();
        for k in 1..=n_samples {
            let t = k as f64 * sample_dt;
            a = advance(&a)?;
            b = advance(&b)?;
            for i in 0..sys.dim() {
                if a[i] > b[i] + cfg.eq_tol {
                    mono_witnesses.push(Witness {
                        points: vec![xi1.as_slice().to_vec(), xi2.as_slice().to_vec()],
                        entry: None,
                        component: Some(i),
                        alpha: None,
                        observed: a[i] - b[i],
                        margin: a[i] - b[i] - cfg.eq_tol,
                        description: format!(
                            "order violated at t = {t}: phi_i = {} > {}",
                            a[i], b[i]
                        ),
                    });
                }
            }
            for &i in &strict {
                if b[i] - a[i] <= cfg.eq_tol {
                    strict_witnesses.push(Witness {
                        points: vec![xi1.as_slice().to_vec(), xi2.as_slice().to_vec()],
                        entry: None,
                        component: Some(i),
                        alpha: None,
                        observed: b[i] - a[i],
                        margin: cfg.eq_tol - (b[i] - a[i]),
                        description: format!(
                            "strict order collapsed at t = {t} on component {i}: gap = {}",
                            b[i] - a[i]
                        ),
                    });
                }
            }
            let d = a.sup_metric(&b)?;
            if d > d0 + cfg.eq_tol {
                ne_witnesses.push(Witness {
                    points: vec![xi1.as_slice().to_vec(), xi2.as_slice().to_vec()],
                    entry: None,
                    component: None,
                    alpha: None,
                    observed: d,
                    margin: d - d0 - cfg.eq_tol,
                    description: format!("sup-distance grew from {d0} to {d} at t = {t}"),
                });
            }
        }

        // Flow plus-homogeneity on the first element of the pair; the base
        // trajectory is shared across translation amounts.
        let mut base_samples = Vec::with_capacity(n_samples);
        let mut base = xi1.clone();
        for _ in 0..n_samples {
            base = advance(&base)?;
            base_samples.push(base.clone());
        }
        for &alpha in &plan.alphas {
            let mut shifted = xi1.translate(alpha);
            for k in 1..=n_samples {
                let t = k as f64 * sample_dt;
                shifted = advance(&shifted)?;
                let defect = shifted.sup_metric(&base_samples[k - 1].translate(alpha))?;
                if defect >= 10.0 * cfg.eq_tol {
                    ph_witnesses.push(Witness {
                        points: vec![xi1.as_slice().to_vec()],
                        entry: None,
                        component: None,
                        alpha: Some(alpha),
                        observed: defect,
                        margin: defect - 10.0 * cfg.eq_tol,
                        description: format!(
                            "flow translation defect {defect} at t = {t} for a = {alpha}"
                        ),
                    });
                }
            }
        }
    }

    let checks = vec![
        CheckReport::from_witnesses(
            "flow_monotonicity",
            pairs.len() * n_samples,
            mono_witnesses,
            "phi(t, x1) <= phi(t, x2) for ordered pairs".to_string(),
        ),
        CheckReport::from_witnesses(
            "flow_type_k",
            pairs.len() * n_samples,
            strict_witnesses,
            "strictly ordered components stay strictly ordered".to_string(),
        ),
        CheckReport::from_witnesses(
            "flow_plus_homogeneity",
            pairs.len() * plan.alphas.len() * n_samples,
            ph_witnesses,
            "phi(t, x + a*1) = phi(t, x) + a*1".to_string(),
        ),
        CheckReport::from_witnesses(
            "flow_nonexpansiveness",
            pairs.len() * n_samples,
            ne_witnesses,
            "sup-distance between trajectories never grows".to_string(),
        ),
    ];
    let verdict = aggregate_verdict(&checks);
    Ok(VerificationReport {
        label: sys.label().to_string(),
        time_domain: sys.time_domain(),
        verdict,
        checks,
        plan: plan.clone(),
        tolerances: *cfg,
    })
}

fn aggregate_verdict(checks: &[CheckReport]) -> Verdict {
    if checks.iter().any(|c| c.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if checks.iter().all(|c| c.verdict == Verdict::Pass) {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

/// Aggregates the structural checks applicable to the system's time domain
/// and smoothness into one topicality verdict:
///
/// - continuous + smooth: Metzler off-diagonals and field-level
///   plus-homogeneity;
/// - discrete + smooth: nonnegative Jacobian with strictly positive
///   diagonal (a.e. proxy) and map-level plus-homogeneity, with
///   row-stochasticity attached as a derived consistency check on passes;
/// - non-smooth systems: direct order probing instead of Jacobian checks.
///   For continuous-time non-smooth systems the probing certifies
///   monotonicity only, so a passing verdict stays inconclusive.
pub fn classify(
    sys: &SystemDefinition,
    plan: &SamplePlan,
    cfg: &ToleranceConfig,
) -> Result<VerificationReport, VerifyError> {
    let mut checks = Vec::new();
    let verdict;
    match (sys.time_domain(), sys.is_smooth()) {
        (TimeDomain::Continuous, true) => {
            checks.push(check_metzler_ct(sys, plan, cfg)?);
            checks.push(check_plus_homogeneity(sys, plan, cfg)?);
            verdict = aggregate_verdict(&checks);
        }
        (TimeDomain::Continuous, false) => {
            checks.push(check_kamke_direct(sys, plan, cfg)?);
            checks.push(check_plus_homogeneity(sys, plan, cfg)?);
            verdict = match aggregate_verdict(&checks) {
                Verdict::Pass => Verdict::Inconclusive,
                v => v,
            };
        }
        (TimeDomain::Discrete, true) => {
            checks.push(check_nonneg_posdiag_dt(sys, plan, cfg)?);
            checks.push(check_plus_homogeneity(sys, plan, cfg)?);
            verdict = aggregate_verdict(&checks);
            if verdict == Verdict::Pass {
                checks.push(check_row_stochastic(sys, plan, cfg)?);
            }
        }
        (TimeDomain::Discrete, false) => {
            checks.push(check_monotone_probe_dt(sys, plan, cfg)?);
            checks.push(check_type_k_probe_dt(sys, plan, cfg)?);
            checks.push(check_plus_homogeneity(sys, plan, cfg)?);
            verdict = aggregate_verdict(&checks);
        }
    }
    Ok(VerificationReport {
        label: sys.label().to_string(),
        time_domain: sys.time_domain(),
        verdict,
        checks,
        plan: plan.clone(),
        tolerances: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::DomainBox;
    use std::sync::Arc;

    fn plan2() -> SamplePlan {
        SamplePlan::new(DomainBox::uniform(-2.0, 2.0, 2).unwrap(), 50, 50, 42).unwrap()
    }

    fn cfg_ct() -> ToleranceConfig {
        ToleranceConfig::continuous()
    }

    fn cfg_dt() -> ToleranceConfig {
        ToleranceConfig::discrete()
    }

    fn consensus_ct() -> SystemDefinition {
        SystemDefinition::continuous("consensus2", DomainBox::unbounded(2), |x| {
            vec![x[1] - x[0], x[0] - x[1]]
        })
    }

    fn rotation_ct() -> SystemDefinition {
        SystemDefinition::continuous("rotation", DomainBox::unbounded(2), |x| {
            vec![-x[1], x[0]]
        })
    }

    fn swap_dt() -> SystemDefinition {
        SystemDefinition::discrete("swap", DomainBox::unbounded(2), |x| vec![x[1], x[0]])
    }

    fn square_dt() -> SystemDefinition {
        SystemDefinition::discrete("square", DomainBox::unbounded(2), |x| {
            vec![x[0] * x[0], x[1] * x[1]]
        })
    }

    fn averaging_dt() -> SystemDefinition {
        SystemDefinition::discrete("averaging", DomainBox::unbounded(2), |x| {
            vec![0.75 * x[0] + 0.25 * x[1], 0.25 * x[0] + 0.75 * x[1]]
        })
    }

    fn sv(v: &[f64]) -> StateVector {
        StateVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn numeric_jacobian_examples() {
        let ident = SystemDefinition::discrete("id", DomainBox::unbounded(3), |x| {
            x.as_slice().to_vec()
        });
        let jac = numeric_jacobian(&ident, &sv(&[0.3, -1.0, 2.0]), 1e-6).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((jac[(i, j)] - expected).abs() < 1e-9);
            }
        }

        // Linear field -Lx has constant Jacobian -L; central differences are
        // exact for linear maps up to rounding.
        let jac = numeric_jacobian(&consensus_ct(), &sv(&[0.7, -0.3]), 1e-6).unwrap();
        let expected = [[-1.0, 1.0], [1.0, -1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((jac[(i, j)] - expected[i][j]).abs() < 1e-8);
            }
        }

        let poly = SystemDefinition::discrete("poly", DomainBox::unbounded(2), |x| {
            vec![x[1] * x[1], x[0]]
        });
        let jac = numeric_jacobian(&poly, &sv(&[1.0, 2.0]), 1e-6).unwrap();
        let expected = [[0.0, 4.0], [1.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (jac[(i, j)] - expected[i][j]).abs() < 1e-6,
                    "J[{i}][{j}] = {}",
                    jac[(i, j)]
                );
            }
        }
    }

    #[test]
    fn metzler_check_examples() {
        let report = check_metzler_ct(&consensus_ct(), &plan2(), &cfg_ct()).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert!(report.sample_based);

        let report = check_metzler_ct(&rotation_ct(), &plan2(), &cfg_ct()).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        let witness = &report.witnesses[0];
        assert_eq!(witness.entry, Some([0, 1]));
        assert!((witness.observed + 1.0).abs() < 1e-6);
    }

    #[test]
    fn metzler_check_sine_coupling_depends_on_box() {
        let kuramoto = SystemDefinition::continuous("sine2", DomainBox::unbounded(2), |x| {
            vec![(x[1] - x[0]).sin(), (x[0] - x[1]).sin()]
        });
        let narrow = SamplePlan::new(
            DomainBox::uniform(-std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4, 2)
                .unwrap(),
            100,
            10,
            7,
        )
        .unwrap();
        let wide = SamplePlan::new(
            DomainBox::uniform(-std::f64::consts::PI, std::f64::consts::PI, 2).unwrap(),
            100,
            10,
            7,
        )
        .unwrap();
        assert_eq!(
            check_metzler_ct(&kuramoto, &narrow, &cfg_ct()).unwrap().verdict,
            Verdict::Pass
        );
        assert_eq!(
            check_metzler_ct(&kuramoto, &wide, &cfg_ct()).unwrap().verdict,
            Verdict::Fail
        );
    }

    #[test]
    fn nonneg_posdiag_examples() {
        let report = check_nonneg_posdiag_dt(&averaging_dt(), &plan2(), &cfg_dt()).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);

        let report = check_nonneg_posdiag_dt(&swap_dt(), &plan2(), &cfg_dt()).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        assert!(report
            .witnesses
            .iter()
            .any(|w| matches!(w.entry, Some([i, j]) if i == j)));
    }

    #[test]
    fn plus_homogeneity_examples() {
        let report = check_plus_homogeneity(&consensus_ct(), &plan2(), &cfg_ct()).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);

        let report = check_plus_homogeneity(&square_dt(), &plan2(), &cfg_dt()).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);

        let max_plus = SystemDefinition::discrete("mp", DomainBox::unbounded(2), |x| {
            vec![x[0].max(x[1] - 1.0), (x[0] - 1.0).max(x[1])]
        })
        .non_smooth();
        let report = check_plus_homogeneity(&max_plus, &plan2(), &cfg_dt()).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
    }

    #[test]
    fn kamke_direct_examples() {
        assert_eq!(
            check_kamke_direct(&consensus_ct(), &plan2(), &cfg_ct())
                .unwrap()
                .verdict,
            Verdict::Pass
        );
        let report = check_kamke_direct(&rotation_ct(), &plan2(), &cfg_ct()).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);

        // Any scalar vector field passes vacuously.
        let scalar = SystemDefinition::continuous("cubic", DomainBox::unbounded(1), |x| {
            vec![-x[0] * x[0] * x[0]]
        });
        let plan1 = SamplePlan::new(DomainBox::uniform(-2.0, 2.0, 1).unwrap(), 20, 50, 3).unwrap();
        assert_eq!(
            check_kamke_direct(&scalar, &plan1, &cfg_ct()).unwrap().verdict,
            Verdict::Pass
        );
    }

    #[test]
    fn row_stochastic_examples() {
        assert_eq!(
            check_row_stochastic(&averaging_dt(), &plan2(), &cfg_dt())
                .unwrap()
                .verdict,
            Verdict::Pass
        );
        let halving = SystemDefinition::discrete("halve", DomainBox::unbounded(2), |x| {
            vec![0.5 * x[0], 0.5 * x[1]]
        });
        let report = check_row_stochastic(&halving, &plan2(), &cfg_dt()).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        assert!((report.witnesses[0].observed - 0.5).abs() < 1e-6);
    }

    #[test]
    fn probes_distinguish_swap_from_averaging() {
        assert_eq!(
            check_monotone_probe_dt(&swap_dt(), &plan2(), &cfg_dt())
                .unwrap()
                .verdict,
            Verdict::Pass
        );
        assert_eq!(
            check_type_k_probe_dt(&swap_dt(), &plan2(), &cfg_dt())
                .unwrap()
                .verdict,
            Verdict::Fail
        );
        assert_eq!(
            check_type_k_probe_dt(&averaging_dt(), &plan2(), &cfg_dt())
                .unwrap()
                .verdict,
            Verdict::Pass
        );
    }

    #[test]
    fn classify_examples() {
        let report = classify(&consensus_ct(), &plan2(), &cfg_ct()).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);

        let report = classify(&swap_dt(), &plan2(), &cfg_dt()).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        assert_eq!(
            report.check("plus_homogeneity").unwrap().verdict,
            Verdict::Pass
        );
        assert_eq!(
            report.check("nonneg_posdiag_dt").unwrap().verdict,
            Verdict::Fail
        );

        let report = classify(&rotation_ct(), &plan2(), &cfg_ct()).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        assert_eq!(report.check("metzler_ct").unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn classify_attaches_row_stochastic_on_pass() {
        let report = classify(&averaging_dt(), &plan2(), &cfg_dt()).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert_eq!(
            report.check("row_stochastic").unwrap().verdict,
            Verdict::Pass
        );
    }

    #[test]
    fn flow_properties_swap_map() {
        let report = test_flow_properties(
            &swap_dt(),
            &plan2(),
            10.0,
            &cfg_dt(),
            &StepConfig::default(),
        )
        .unwrap();
        assert_eq!(
            report.check("flow_monotonicity").unwrap().verdict,
            Verdict::Pass
        );
        assert_eq!(
            report.check("flow_plus_homogeneity").unwrap().verdict,
            Verdict::Pass
        );
        assert_eq!(
            report.check("flow_nonexpansiveness").unwrap().verdict,
            Verdict::Pass
        );
        assert_eq!(report.check("flow_type_k").unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn flow_type_k_fails_on_explicit_swap_pair() {
        // The witness pair from the strict check: (0,0) vs (0,1) swaps its
        // strictly ordered component after one application.
        let sys = swap_dt();
        let a = sys.evaluate(&sv(&[0.0, 0.0])).unwrap();
        let b = sys.evaluate(&sv(&[0.0, 1.0])).unwrap();
        assert_eq!(b[1] - a[1], 0.0);
    }

    #[test]
    fn flow_properties_square_map_on_positive_box() {
        let plan = SamplePlan::new(DomainBox::uniform(0.1, 1.0, 2).unwrap(), 20, 20, 11).unwrap();
        let report = test_flow_properties(
            &square_dt(),
            &plan,
            3.0,
            &cfg_dt(),
            &StepConfig::default(),
        )
        .unwrap();
        assert_eq!(
            report.check("flow_monotonicity").unwrap().verdict,
            Verdict::Pass
        );
        assert_eq!(
            report.check("flow_plus_homogeneity").unwrap().verdict,
            Verdict::Fail
        );
    }

    #[test]
    fn flow_properties_linear_consensus_all_pass() {
        let report = test_flow_properties(
            &consensus_ct(),
            &plan2(),
            5.0,
            &cfg_ct(),
            &StepConfig::default(),
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
    }

    #[test]
    fn reports_are_deterministic() {
        let a = classify(&consensus_ct(), &plan2(), &cfg_ct()).unwrap();
        let b = classify(&consensus_ct(), &plan2(), &cfg_ct()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn witnesses_recheck_against_fresh_evaluations() {
        let report = classify(&rotation_ct(), &plan2(), &cfg_ct()).unwrap();
        let check = report.check("metzler_ct").unwrap();
        assert!(!check.witnesses.is_empty());
        for w in &check.witnesses {
            let x = sv(&w.points[0]);
            let jac = numeric_jacobian(&rotation_ct(), &x, cfg_ct().fd_step).unwrap();
            let [i, j] = w.entry.unwrap();
            assert!(jac[(i, j)] < -cfg_ct().eq_tol);
            assert!((jac[(i, j)] - w.observed).abs() < 1e-9);
        }
    }

    #[test]
    fn jacobian_consistency_check() {
        let good = SystemDefinition::continuous("lin", DomainBox::unbounded(2), |x| {
            vec![x[1] - x[0], x[0] - x[1]]
        })
        .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
        assert_eq!(
            check_jacobian_consistency(&good, &plan2(), &cfg_ct())
                .unwrap()
                .verdict,
            Verdict::Pass
        );

        let wrong = SystemDefinition::continuous("lin", DomainBox::unbounded(2), |x| {
            vec![x[1] - x[0], x[0] - x[1]]
        })
        .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -1.0]));
        assert_eq!(
            check_jacobian_consistency(&wrong, &plan2(), &cfg_ct())
                .unwrap()
                .verdict,
            Verdict::Fail
        );
    }

    #[test]
    fn sampling_is_deterministic_and_in_box() {
        let plan = plan2();
        let p1 = plan.sample_points();
        let p2 = plan.sample_points();
        assert_eq!(p1, p2);
        for x in &p1 {
            assert!(plan.sample_box.contains(x).unwrap());
        }
        for (a, b) in plan.sample_pairs() {
            assert!(a.partial_leq(&b).unwrap());
            assert!((0..a.dim()).any(|i| a[i] == b[i]), "at least one tie");
        }
    }

    #[test]
    fn plan_rejects_unbounded_box() {
        assert!(matches!(
            SamplePlan::new(DomainBox::unbounded(2), 10, 10, 1),
            Err(VerifyError::UnboundedBox)
        ));
    }

    #[test]
    fn analytic_jacobian_is_preferred() {
        // A deliberately wrong analytic Jacobian must drive the verdict,
        // proving the analytic route is taken when declared.
        let sys = SystemDefinition::continuous("lin", DomainBox::unbounded(2), |x| {
            vec![x[1] - x[0], x[0] - x[1]]
        })
        .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, -1.0, -1.0]));
        let report = check_metzler_ct(&sys, &plan2(), &cfg_ct()).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        let _ = Arc::new(());
    }
}
