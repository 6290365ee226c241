//! Constructors for the bundled example systems, each emitting a
//! [`SystemDefinition`] (with analytic Jacobians where closed-form), plus
//! the exp/log conjugation onto the positive orthant and a registry of
//! ready-made models used by the verification and acceptance suites.

use crate::core::{CoreError, DomainBox, StateVector, TimeDomain};
use crate::mas::{assemble, Coupling, DirectedGraph, MasDefinition, MasError};
use crate::verify::{CheckReport, Verdict, Witness};
use crate::dynamics::SystemDefinition;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("matrix must be square with n >= 1, got {got} entries for n = {n}")]
    BadMatrixShape { n: usize, got: usize },
    #[error("row {0} has no finite entry")]
    EmptyRow(usize),
    #[error("matrix file: {0}")]
    ParseError(String),
    #[error("smoothing sharpness must be strictly positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("saturation parameters must be strictly positive, got s = {s}, m = {m}")]
    BadSaturation { s: f64, m: f64 },
    #[error("edge ({i}, {j}): weight {w} is not strictly positive")]
    BadWeight { i: usize, j: usize, w: f64 },
    #[error("missing weight for edge ({i}, {j})")]
    MissingWeight { i: usize, j: usize },
    #[error("agent {agent}: step gain {eps} violates the strict bound {bound}")]
    EpsilonTooLarge { agent: usize, eps: f64, bound: f64 },
    #[error("discrete-time construction requires per-node step gains")]
    MissingEpsilons,
    #[error("continuous-time construction takes no step gains")]
    UnexpectedEpsilons,
    #[error("expected {n} step gains, got {got}")]
    EpsilonCount { n: usize, got: usize },
    #[error("coupling must vanish at zero, got h(0) = {0}")]
    NonZeroAtOrigin(f64),
    #[error("box must be uniform [a, b]^n for an oscillator network")]
    NonUniformBox,
    #[error(
        "box side {side} exceeds the monotone window {alpha} of coupling ({i}, {j})"
    )]
    BoxExceedsMonotoneWindow {
        side: f64,
        alpha: f64,
        i: usize,
        j: usize,
    },
    #[error("state {state}, actions ({a1}, {a2}): transition row sums to {sum}, expected 1")]
    BadTransitionSum {
        state: usize,
        a1: usize,
        a2: usize,
        sum: f64,
    },
    #[error("state {state}, actions ({a1}, {a2}): negative transition probability {p}")]
    NegativeProbability {
        state: usize,
        a1: usize,
        a2: usize,
        p: f64,
    },
    #[error("state {state}: action table must be a nonempty rectangle")]
    BadActionTable { state: usize },
    #[error("game has no states")]
    EmptyGame,
    #[error("game file: {0}")]
    GameParseError(String),
    #[error("rate function returned {got} components, expected {expected}")]
    RateDimension { expected: usize, got: usize },
    #[error("conjugation applies to discrete-time systems, got a continuous-time one")]
    NotDiscrete,
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Mas(#[from] MasError),
}

// ---------------------------------------------------------------------------
// Max-plus maps
// ---------------------------------------------------------------------------

/// An entry of a matrix over R united with the max-plus zero. The sentinel
/// is a tagged value and never enters floating-point arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxPlusEntry {
    NegInf,
    Finite(f64),
}

impl MaxPlusEntry {
    pub fn as_finite(self) -> Option<f64> {
        match self {
            MaxPlusEntry::Finite(v) => Some(v),
            MaxPlusEntry::NegInf => None,
        }
    }
}

/// Square matrix over the max-plus semiring; every row carries at least one
/// finite entry so the induced map is everywhere defined.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPlusMatrix {
    n: usize,
    entries: Vec<MaxPlusEntry>,
}

impl MaxPlusMatrix {
    pub fn new(n: usize, entries: Vec<MaxPlusEntry>) -> Result<Self, ModelError> {
        if n == 0 || entries.len() != n * n {
            return Err(ModelError::BadMatrixShape {
                n,
                got: entries.len(),
            });
        }
        for i in 0..n {
            if !(0..n).any(|j| matches!(entries[i * n + j], MaxPlusEntry::Finite(_))) {
                return Err(ModelError::EmptyRow(i));
            }
        }
        Ok(MaxPlusMatrix { n, entries })
    }

    /// Builds from rows of finite values.
    pub fn from_finite(rows: &[&[f64]]) -> Result<Self, ModelError> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(ModelError::BadMatrixShape {
                    n,
                    got: rows.iter().map(|r| r.len()).sum(),
                });
            }
            entries.extend(row.iter().map(|&v| MaxPlusEntry::Finite(v)));
        }
        MaxPlusMatrix::new(n, entries)
    }

    /// Max-plus identity: zero diagonal, sentinel off-diagonal.
    pub fn identity(n: usize) -> Result<Self, ModelError> {
        let entries = (0..n * n)
            .map(|k| {
                if k / n == k % n {
                    MaxPlusEntry::Finite(0.0)
                } else {
                    MaxPlusEntry::NegInf
                }
            })
            .collect();
        MaxPlusMatrix::new(n, entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> MaxPlusEntry {
        self.entries[i * self.n + j]
    }

    pub fn min_finite(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|e| e.as_finite())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn has_sentinels(&self) -> bool {
        self.entries.iter().any(|e| e.as_finite().is_none())
    }

    /// Parses the matrix file format: first line `n`, then n rows of n
    /// whitespace-separated entries, `-inf` for the sentinel.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| ModelError::ParseError("empty file".into()))?;
        let n: usize = header
            .parse()
            .map_err(|e| ModelError::ParseError(format!("bad dimension `{header}`: {e}")))?;
        let mut entries = Vec::with_capacity(n * n);
        for _ in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| ModelError::ParseError(format!("expected {n} rows")))?;
            let row: Vec<&str> = line.split_whitespace().collect();
            if row.len() != n {
                return Err(ModelError::ParseError(format!(
                    "expected {n} entries per row, got `{line}`"
                )));
            }
            for field in row {
                if field == "-inf" {
                    entries.push(MaxPlusEntry::NegInf);
                } else {
                    let v: f64 = field.parse().map_err(|e| {
                        ModelError::ParseError(format!("bad entry `{field}`: {e}"))
                    })?;
                    entries.push(MaxPlusEntry::Finite(v));
                }
            }
        }
        if lines.next().is_some() {
            return Err(ModelError::ParseError("trailing content after matrix".into()));
        }
        MaxPlusMatrix::new(n, entries)
    }
}

/// The exact max-plus map f_i(x) = max over finite a_ij of (a_ij + x_j),
/// a discrete-time system flagged non-smooth: classification probes order
/// preservation directly instead of differentiating the kinks.
pub fn max_plus(a: &MaxPlusMatrix) -> SystemDefinition {
    let matrix = a.clone();
    let n = a.n();
    SystemDefinition::discrete(
        format!("max_plus(n={n})"),
        DomainBox::unbounded(n),
        move |x: &StateVector| {
            (0..n)
                .map(|i| {
                    (0..n)
                        .filter_map(|j| matrix.get(i, j).as_finite().map(|a_ij| a_ij + x[j]))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        },
    )
    .non_smooth()
}

/// Smooth surrogate of the max-plus map via the scaled log-sum-exp
/// smoother: f_i(x) = (1/alpha) log sum_j exp(alpha (a_ij + x_j)).
///
/// The Jacobian rows are the softmax weights: positive and summing to one,
/// so the map stays monotone and plus-homogeneous for every alpha and
/// approaches the exact map with uniform error at most log(n)/alpha.
/// Sentinel entries are replaced by (min finite entry - 50/alpha), recorded
/// in the label.
pub fn smooth_max_plus(a: &MaxPlusMatrix, alpha: f64) -> Result<SystemDefinition, ModelError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(ModelError::NonPositiveAlpha(alpha));
    }
    let n = a.n();
    let replacement = a.min_finite() - 50.0 / alpha;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| a.get(i, j).as_finite().unwrap_or(replacement))
                .collect()
        })
        .collect();
    let label = if a.has_sentinels() {
        format!("smooth_max_plus(n={n},alpha={alpha},sentinels->{replacement})")
    } else {
        format!("smooth_max_plus(n={n},alpha={alpha})")
    };

    let rows_eval = rows.clone();
    let eval = move |x: &StateVector| -> Vec<f64> {
        rows_eval
            .iter()
            .map(|row| {
                let shift = row
                    .iter()
                    .zip(x.iter())
                    .map(|(a_ij, xj)| a_ij + xj)
                    .fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = row
                    .iter()
                    .zip(x.iter())
                    .map(|(a_ij, xj)| (alpha * (a_ij + xj - shift)).exp())
                    .sum();
                shift + sum.ln() / alpha
            })
            .collect()
    };

    let rows_jac = rows;
    let jacobian = move |x: &StateVector| -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(n, n);
        for (i, row) in rows_jac.iter().enumerate() {
            let shift = row
                .iter()
                .zip(x.iter())
                .map(|(a_ij, xj)| a_ij + xj)
                .fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = row
                .iter()
                .zip(x.iter())
                .map(|(a_ij, xj)| (alpha * (a_ij + xj - shift)).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            for (j, w) in weights.iter().enumerate() {
                jac[(i, j)] = w / total;
            }
        }
        jac
    };

    Ok(
        SystemDefinition::discrete(label, DomainBox::unbounded(n), eval)
            .with_jacobian(jacobian),
    )
}

/// The weighted-average smoother sum_i x_i e^(alpha x_i) / sum_i e^(alpha x_i),
/// kept as a labeled reference for comparison with the log-sum-exp smoother
/// used by [`smooth_max_plus`]. Its partial derivatives
/// w_j (1 + alpha (x_j - mean)) turn negative for widely separated inputs,
/// so it is not order-preserving; the test suite pins a violating sample.
pub fn alpha_max_reference(values: &[f64], alpha: f64) -> f64 {
    let shift = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut num = 0.0;
    let mut den = 0.0;
    for &v in values {
        let w = (alpha * (v - shift)).exp();
        num += v * w;
        den += w;
    }
    num / den
}

// ---------------------------------------------------------------------------
// Stochastic games
// ---------------------------------------------------------------------------

/// One cell of a game table: the payment and the distribution over
/// successor states for a joint action choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameOutcome {
    pub reward: f64,
    pub transition: Vec<f64>,
}

/// A finite two-player zero-sum stochastic game: per state, a rectangular
/// table indexed by (minimizer action, maximizer action).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticGame {
    pub states: Vec<Vec<Vec<GameOutcome>>>,
}

impl StochasticGame {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n_states();
        if n == 0 {
            return Err(ModelError::EmptyGame);
        }
        for (state, table) in self.states.iter().enumerate() {
            if table.is_empty() || table.iter().any(|row| row.is_empty()) {
                return Err(ModelError::BadActionTable { state });
            }
            let width = table[0].len();
            if table.iter().any(|row| row.len() != width) {
                return Err(ModelError::BadActionTable { state });
            }
            for (a1, row) in table.iter().enumerate() {
                for (a2, outcome) in row.iter().enumerate() {
                    if outcome.transition.len() != n {
                        return Err(ModelError::BadActionTable { state });
                    }
                    let mut sum = 0.0;
                    for &p in &outcome.transition {
                        if p < 0.0 {
                            return Err(ModelError::NegativeProbability { state, a1, a2, p });
                        }
                        sum += p;
                    }
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(ModelError::BadTransitionSum { state, a1, a2, sum });
                    }
                }
            }
        }
        Ok(())
    }

    /// Positive self-transition probability at every state under every joint
    /// action: the structural condition under which the induced operator
    /// also preserves strict componentwise order.
    pub fn has_positive_self_transitions(&self) -> bool {
        self.states.iter().enumerate().all(|(i, table)| {
            table
                .iter()
                .all(|row| row.iter().all(|outcome| outcome.transition[i] > 0.0))
        })
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let game: StochasticGame =
            serde_json::from_str(text).map_err(|e| ModelError::GameParseError(e.to_string()))?;
        game.validate()?;
        Ok(game)
    }
}

/// The dynamic-programming operator of a zero-sum stochastic game:
/// f_i(x) = min over a1 of max over a2 of (r + sum_j p_j x_j). Exact
/// min-max by exhaustive enumeration of the finite action sets; flagged
/// non-smooth.
pub fn shapley(game: &StochasticGame) -> Result<SystemDefinition, ModelError> {
    game.validate()?;
    let n = game.n_states();
    let g = game.clone();
    let label = format!(
        "shapley(n={n},positive_self_transitions={})",
        game.has_positive_self_transitions()
    );
    Ok(SystemDefinition::discrete(
        label,
        DomainBox::unbounded(n),
        move |x: &StateVector| {
            g.states
                .iter()
                .map(|table| {
                    table
                        .iter()
                        .map(|row| {
                            row.iter()
                                .map(|outcome| {
                                    outcome.reward
                                        + outcome
                                            .transition
                                            .iter()
                                            .zip(x.iter())
                                            .map(|(p, xj)| p * xj)
                                            .sum::<f64>()
                                })
                                .fold(f64::NEG_INFINITY, f64::max)
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        },
    )
    .non_smooth())
}

// ---------------------------------------------------------------------------
// Consensus protocols and oscillator networks
// ---------------------------------------------------------------------------

/// Weighted linear consensus. Continuous time yields the field with rows
/// sum_j w_ij (x_j - x_i); discrete time yields the averaging map
/// x_i + eps_i sum_j w_ij (x_j - x_i), which is row-stochastic with a
/// strictly positive diagonal exactly when eps_i sum_j w_ij < 1. Step gains
/// at or above that bound are refused.
pub fn linear_consensus(
    graph: &DirectedGraph,
    weights: &BTreeMap<(usize, usize), f64>,
    time_domain: TimeDomain,
    eps: Option<&[f64]>,
) -> Result<SystemDefinition, ModelError> {
    Ok(assemble(&linear_consensus_mas(
        graph,
        weights,
        time_domain,
        eps,
    )?)?)
}

/// The multi-agent form behind [`linear_consensus`], for callers that need
/// the graph and per-agent rules rather than the assembled system.
pub fn linear_consensus_mas(
    graph: &DirectedGraph,
    weights: &BTreeMap<(usize, usize), f64>,
    time_domain: TimeDomain,
    eps: Option<&[f64]>,
) -> Result<MasDefinition, ModelError> {
    let n = graph.n();
    for (i, j) in graph.edges() {
        match weights.get(&(i, j)) {
            None => return Err(ModelError::MissingWeight { i, j }),
            Some(&w) if !(w > 0.0) => return Err(ModelError::BadWeight { i, j, w }),
            _ => {}
        }
    }
    let eps_vec = match (time_domain, eps) {
        (TimeDomain::Continuous, None) => None,
        (TimeDomain::Continuous, Some(_)) => return Err(ModelError::UnexpectedEpsilons),
        (TimeDomain::Discrete, None) => return Err(ModelError::MissingEpsilons),
        (TimeDomain::Discrete, Some(e)) => {
            if e.len() != n {
                return Err(ModelError::EpsilonCount { n, got: e.len() });
            }
            for (agent, &eps_i) in e.iter().enumerate() {
                let weight_sum: f64 = graph
                    .neighbors(agent)
                    .iter()
                    .map(|&j| weights[&(agent, j)])
                    .sum();
                if weight_sum > 0.0 {
                    let bound = 1.0 / weight_sum;
                    if !(eps_i < bound) {
                        return Err(ModelError::EpsilonTooLarge {
                            agent,
                            eps: eps_i,
                            bound,
                        });
                    }
                }
                if !(eps_i > 0.0) {
                    return Err(MasError::NonPositiveEpsilon {
                        agent,
                        eps: eps_i,
                    }
                    .into());
                }
            }
            Some(e.to_vec())
        }
    };

    let rules = (0..n)
        .map(|i| {
            let couplings = graph
                .neighbors(i)
                .into_iter()
                .map(|j| (j, Coupling::linear(weights[&(i, j)])));
            crate::mas::LocalRule::coupled(i, couplings, eps_vec.as_ref().map(|e| e[i]))
        })
        .collect();
    let label = match time_domain {
        TimeDomain::Continuous => format!("linear_consensus_ct(n={n})"),
        TimeDomain::Discrete => format!("linear_consensus_dt(n={n})"),
    };
    Ok(MasDefinition::new(
        graph.clone(),
        rules,
        time_domain,
        DomainBox::unbounded(n),
        label,
    )?)
}

/// Linear consensus with unit weight on every edge.
pub fn unit_weights(graph: &DirectedGraph) -> BTreeMap<(usize, usize), f64> {
    graph.edges().map(|e| (e, 1.0)).collect()
}

/// Saturation parameters: `s` bounds the coupling output, `m` sets the
/// steepness at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturatedCouplingParams {
    pub s: f64,
    pub m: f64,
}

/// The bounded coupling h(x) = s (1 - e^(-m x)) / (1 + e^(-m x)), an odd
/// sigmoid with h(0) = 0, |h| < s, and derivative in (0, m s / 2]. With
/// s = 1, m = 2 this is tanh; as m grows it approaches sign(x).
pub fn saturated_coupling(p: SaturatedCouplingParams) -> Result<Coupling, ModelError> {
    if !(p.s > 0.0) || !(p.m > 0.0) || !p.s.is_finite() || !p.m.is_finite() {
        return Err(ModelError::BadSaturation { s: p.s, m: p.m });
    }
    let SaturatedCouplingParams { s, m } = p;
    Ok(
        Coupling::new(format!("saturated(s={s},m={m})"), move |x| {
            s * (m * x / 2.0).tanh()
        })
        .with_derivative(move |x| {
            let t = (m * x / 2.0).tanh();
            s * m / 2.0 * (1.0 - t * t)
        })
        .with_slope_sup(s * m / 2.0),
    )
}

/// Per-edge oscillator coupling: a 2*pi-periodic function vanishing at zero
/// together with the half-width `alpha` of the interval around zero on
/// which it increases.
#[derive(Clone, Debug)]
pub struct PeriodicCoupling {
    pub coupling: Coupling,
    pub monotone_halfwidth: f64,
}

/// Sinusoidal phase coupling, increasing on (-pi/2, pi/2).
pub fn sine_coupling() -> PeriodicCoupling {
    PeriodicCoupling {
        coupling: Coupling::sine(),
        monotone_halfwidth: std::f64::consts::FRAC_PI_2,
    }
}

/// A network of identical-frequency phase oscillators coupled through phase
/// differences: f_i = sum_j h_ij(x_j - x_i) on the band [a, b]^n. The box
/// side must not exceed any coupling's monotone window, which keeps all
/// phase differences in the region of increasing coupling; wider boxes are
/// refused.
pub fn kuramoto(
    graph: &DirectedGraph,
    couplings: &BTreeMap<(usize, usize), PeriodicCoupling>,
    band: DomainBox,
) -> Result<SystemDefinition, ModelError> {
    let n = graph.n();
    if band.dim() != n {
        return Err(CoreError::DimensionMismatch {
            left: band.dim(),
            right: n,
        }
        .into());
    }
    let (lo, hi) = (band.lower()[0], band.upper()[0]);
    if band.lower().iter().any(|&v| v != lo) || band.upper().iter().any(|&v| v != hi) {
        return Err(ModelError::NonUniformBox);
    }
    let side = hi - lo;
    let mut min_alpha = f64::INFINITY;
    for (i, j) in graph.edges() {
        let pc = couplings.get(&(i, j)).ok_or(MasError::MissingCoupling {
            agent: i,
            neighbor: j,
        })?;
        let at_zero = pc.coupling.eval(0.0);
        if at_zero.abs() > 1e-12 {
            return Err(ModelError::NonZeroAtOrigin(at_zero));
        }
        if side > pc.monotone_halfwidth {
            return Err(ModelError::BoxExceedsMonotoneWindow {
                side,
                alpha: pc.monotone_halfwidth,
                i,
                j,
            });
        }
        min_alpha = min_alpha.min(pc.monotone_halfwidth);
    }
    let rules = (0..n)
        .map(|i| {
            let cs = graph
                .neighbors(i)
                .into_iter()
                .map(|j| (j, couplings[&(i, j)].coupling.clone()));
            crate::mas::LocalRule::coupled(i, cs, None)
        })
        .collect();
    let mas = MasDefinition::new(
        graph.clone(),
        rules,
        TimeDomain::Continuous,
        band,
        format!("kuramoto(n={n},alpha={min_alpha})"),
    )?;
    Ok(assemble(&mas)?)
}

/// Same sinusoidal coupling on every edge.
pub fn kuramoto_uniform(
    graph: &DirectedGraph,
    coupling: PeriodicCoupling,
    band: DomainBox,
) -> Result<SystemDefinition, ModelError> {
    let couplings = graph.edges().map(|e| (e, coupling.clone())).collect();
    kuramoto(graph, &couplings, band)
}

// ---------------------------------------------------------------------------
// Reduced reaction networks
// ---------------------------------------------------------------------------

pub type RateFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type RateJacobianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Reduced reaction-coordinate dynamics x' = h(Gamma x) for a stoichiometry
/// map Gamma (e rows, d columns) and rate function h mapping R^e to R^d.
/// Translation invariance of the field holds exactly when Gamma annihilates
/// the all-ones direction; the constructor checks it by sampling and
/// returns the verdict alongside the system rather than guessing from the
/// matrix structure.
pub fn chemical(
    gamma: DMatrix<f64>,
    rate: RateFn,
    rate_jacobian: Option<RateJacobianFn>,
    domain: DomainBox,
    label: impl Into<String>,
) -> Result<(SystemDefinition, CheckReport), ModelError> {
    let d = gamma.ncols();
    let e = gamma.nrows();
    if domain.dim() != d {
        return Err(CoreError::DimensionMismatch {
            left: domain.dim(),
            right: d,
        }
        .into());
    }
    let label = label.into();

    let apply = {
        let gamma = gamma.clone();
        let rate = rate.clone();
        move |x: &StateVector| -> Result<Vec<f64>, ModelError> {
            let image: Vec<f64> = (0..e)
                .map(|r| (0..d).map(|c| gamma[(r, c)] * x[c]).sum())
                .collect();
            let out = rate(&image);
            if out.len() != d {
                return Err(ModelError::RateDimension {
                    expected: d,
                    got: out.len(),
                });
            }
            Ok(out)
        }
    };

    // Probe the translation identity f(x + a*1) = f(x) on a fixed sample.
    let mut rng = ChaCha8Rng::seed_from_u64(0x6368_656d);
    let sample_box = if domain.is_bounded() {
        domain.clone()
    } else {
        DomainBox::uniform(-1.0, 1.0, d)?
    };
    let mut witnesses = Vec::new();
    let alphas = [-1.0, 0.5, 1.0];
    let n_probe = 16;
    for _ in 0..n_probe {
        let coords: Vec<f64> = sample_box
            .lower()
            .iter()
            .zip(sample_box.upper().iter())
            .map(|(&lo, &hi)| lo + rng.gen_range(0.0..1.0) * (hi - lo))
            .collect();
        let x = StateVector::new(coords)?;
        let fx = apply(&x)?;
        for alpha in alphas {
            let shifted = apply(&x.translate(alpha))?;
            let defect = fx
                .iter()
                .zip(shifted.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if defect > 1e-9 {
                witnesses.push(Witness {
                    points: vec![x.as_slice().to_vec()],
                    entry: None,
                    component: None,
                    alpha: Some(alpha),
                    observed: defect,
                    margin: defect - 1e-9,
                    description: format!("f(x + a*1) differs from f(x) by {defect}"),
                });
            }
        }
    }
    let translation_check = CheckReport {
        name: "translation_invariance".into(),
        verdict: if witnesses.is_empty() {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        sample_based: true,
        samples_checked: n_probe * alphas.len(),
        violations: witnesses.len(),
        witnesses,
        note: "constructor-time sampling of f(x + a*1) = f(x)".into(),
    };

    let eval_apply = apply;
    let dim = d;
    let mut sys = SystemDefinition::continuous(label, domain, move |x: &StateVector| {
        eval_apply(x).unwrap_or_else(|_| vec![f64::NAN; dim])
    });
    if let Some(dh) = rate_jacobian {
        let gamma_jac = gamma.clone();
        sys = sys.with_jacobian(move |x: &StateVector| {
            let image: Vec<f64> = (0..e)
                .map(|r| (0..d).map(|c| gamma_jac[(r, c)] * x[c]).sum())
                .collect();
            dh(&image) * &gamma_jac
        });
    }
    Ok((sys, translation_check))
}

// ---------------------------------------------------------------------------
// Multiplicative conjugation
// ---------------------------------------------------------------------------

/// Conjugates a discrete-time map on R^n into the componentwise
/// exp/log coordinates on the positive orthant: g = exp . f . log.
/// Monotonicity transfers directly and plus-homogeneity becomes scaling
/// homogeneity g(c u) = c g(u). Nonpositive inputs surface as non-finite
/// evaluation errors.
pub fn to_multiplicative(sys: &SystemDefinition) -> Result<SystemDefinition, ModelError> {
    if sys.time_domain() != TimeDomain::Discrete {
        return Err(ModelError::NotDiscrete);
    }
    let inner = sys.clone();
    let dim = sys.dim();
    let domain = DomainBox::new(vec![0.0; dim], vec![f64::INFINITY; dim])?;
    let label = format!("exp({})", sys.label());
    Ok(SystemDefinition::discrete(
        label,
        domain,
        move |u: &StateVector| {
            if u.iter().any(|&v| v <= 0.0) {
                return vec![f64::NAN; dim];
            }
            let logs = StateVector::new_unchecked(u.iter().map(|v| v.ln()).collect());
            match inner.evaluate(&logs) {
                Ok(out) => out.iter().map(|v| v.exp()).collect(),
                Err(_) => vec![f64::NAN; dim],
            }
        },
    )
    .non_smooth())
}

/// Inverse of [`to_multiplicative`]: g = log . f . exp, back on R^n.
pub fn to_additive(sys: &SystemDefinition) -> Result<SystemDefinition, ModelError> {
    if sys.time_domain() != TimeDomain::Discrete {
        return Err(ModelError::NotDiscrete);
    }
    let inner = sys.clone();
    let dim = sys.dim();
    let label = format!("log({})", sys.label());
    Ok(SystemDefinition::discrete(
        label,
        DomainBox::unbounded(dim),
        move |x: &StateVector| {
            let exps = StateVector::new_unchecked(x.iter().map(|v| v.exp()).collect());
            match inner.evaluate(&exps) {
                Ok(out) => out.iter().map(|v| v.ln()).collect(),
                Err(_) => vec![f64::NAN; dim],
            }
        },
    )
    .non_smooth())
}

// ---------------------------------------------------------------------------
// Small named systems and the model registry
// ---------------------------------------------------------------------------

/// The coordinate swap (x1, x2) -> (x2, x1): order-preserving and
/// translation invariant, but its Jacobian has a zero diagonal everywhere,
/// which is exactly what strict-order preservation rules out. Its two-cycles
/// make it the standing counterexample for convergence claims.
pub fn swap_map() -> SystemDefinition {
    SystemDefinition::discrete("swap", DomainBox::unbounded(2), |x| vec![x[1], x[0]])
        .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))
}

/// The planar rotation field (-x2, x1): not order-preserving.
pub fn rotation_field() -> SystemDefinition {
    SystemDefinition::continuous("rotation", DomainBox::unbounded(2), |x| vec![-x[1], x[0]])
        .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]))
}

/// Componentwise squaring: order-preserving on the positive orthant but not
/// translation invariant.
pub fn square_map() -> SystemDefinition {
    SystemDefinition::discrete("square", DomainBox::unbounded(2), |x| {
        vec![x[0] * x[0], x[1] * x[1]]
    })
    .with_jacobian(|x| DMatrix::from_row_slice(2, 2, &[2.0 * x[0], 0.0, 0.0, 2.0 * x[1]]))
}

/// x -> x + offset * 1: a map with no fixed point for nonzero offset.
pub fn translation_map(offset: f64, dim: usize) -> SystemDefinition {
    SystemDefinition::discrete(
        format!("translation(offset={offset})"),
        DomainBox::unbounded(dim),
        move |x| x.iter().map(|v| v + offset).collect(),
    )
    .with_jacobian(move |x| DMatrix::identity(x.dim(), x.dim()))
}

/// Scalar damping x' = -x: order-preserving (trivially, being scalar) but
/// not translation invariant.
pub fn scalar_damping() -> SystemDefinition {
    SystemDefinition::continuous("damping", DomainBox::unbounded(1), |x| vec![-x[0]])
        .with_jacobian(|_| DMatrix::from_row_slice(1, 1, &[-1.0]))
}

fn tanh_saturated() -> Coupling {
    saturated_coupling(SaturatedCouplingParams { s: 1.0, m: 2.0 }).expect("valid parameters")
}

/// A two-state game in which both players have two actions, every
/// transition keeps at least 0.3 mass in place, and rewards stay small, so
/// the induced operator preserves strict order robustly.
pub fn example_game() -> StochasticGame {
    let outcome = |reward: f64, stay: f64, state: usize| {
        let mut transition = vec![1.0 - stay; 2];
        transition[state] = stay;
        GameOutcome { reward, transition }
    };
    StochasticGame {
        states: vec![
            vec![
                vec![outcome(0.4, 0.7, 0), outcome(-0.2, 0.6, 0)],
                vec![outcome(0.1, 0.65, 0), outcome(0.3, 0.7, 0)],
            ],
            vec![
                vec![outcome(-0.4, 0.7, 1), outcome(0.2, 0.6, 1)],
                vec![outcome(-0.1, 0.65, 1), outcome(0.0, 0.7, 1)],
            ],
        ],
    }
}

/// A registry entry: a ready-made system, the box its verification plans
/// should sample, and its documented classification.
#[derive(Debug, Clone)]
pub struct LibraryModel {
    pub system: SystemDefinition,
    pub sample_box: DomainBox,
    /// Documented: order-preserving and translation invariant.
    pub topical: bool,
    /// Documented: additionally preserves strict componentwise order.
    pub k_topical: bool,
}

/// Every bundled example system with its documented classification. The
/// verification suites check the classifier against this registry.
pub fn library() -> Vec<LibraryModel> {
    let pi = std::f64::consts::PI;
    let mut models = Vec::new();

    let entry = |system: SystemDefinition, sample_box: DomainBox, topical: bool, k_topical: bool| {
        LibraryModel {
            system,
            sample_box,
            topical,
            k_topical,
        }
    };

    // Continuous-time models.
    let g2 = DirectedGraph::complete(2).expect("valid graph");
    models.push(entry(
        linear_consensus(&g2, &unit_weights(&g2), TimeDomain::Continuous, None)
            .expect("valid model")
            .relabel("linear_consensus_ct_pair"),
        DomainBox::uniform(-2.0, 2.0, 2).expect("valid box"),
        true,
        true,
    ));

    let cycle3 = DirectedGraph::directed_cycle(3).expect("valid graph");
    models.push(entry(
        linear_consensus(&cycle3, &unit_weights(&cycle3), TimeDomain::Continuous, None)
            .expect("valid model")
            .relabel("linear_consensus_ct_cycle3"),
        DomainBox::uniform(-2.0, 2.0, 3).expect("valid box"),
        true,
        true,
    ));

    let ring3 = DirectedGraph::bidirectional_ring(3).expect("valid graph");
    let tanh_mas_ct = MasDefinition::uniform(
        ring3.clone(),
        tanh_saturated(),
        TimeDomain::Continuous,
        DomainBox::unbounded(3),
        None,
        "tanh_mas_ct_ring3",
    )
    .expect("valid MAS");
    models.push(entry(
        assemble(&tanh_mas_ct).expect("assembles"),
        DomainBox::uniform(-2.0, 2.0, 3).expect("valid box"),
        true,
        true,
    ));

    let osc_box = DomainBox::uniform(-pi / 4.0, pi / 4.0, 2).expect("valid box");
    models.push(entry(
        kuramoto_uniform(&g2, sine_coupling(), osc_box.clone())
            .expect("valid model")
            .relabel("kuramoto_pair_narrow"),
        osc_box,
        true,
        true,
    ));

    // Wide-band oscillator pair: the sign condition fails where the coupling
    // decreases, so the constructor's band guard must be bypassed by calling
    // the raw field directly.
    models.push(entry(
        SystemDefinition::continuous("kuramoto_pair_wide", DomainBox::unbounded(2), |x| {
            vec![(x[1] - x[0]).sin(), (x[0] - x[1]).sin()]
        }),
        DomainBox::uniform(-pi, pi, 2).expect("valid box"),
        false,
        false,
    ));

    let (exchange, _) = chemical(
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
        Arc::new(|u: &[f64]| vec![-u[0], u[0]]),
        Some(Arc::new(|_: &[f64]| DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]))),
        DomainBox::unbounded(2),
        "chemical_exchange",
    )
    .expect("valid model");
    models.push(entry(
        exchange,
        DomainBox::uniform(-2.0, 2.0, 2).expect("valid box"),
        true,
        true,
    ));

    models.push(entry(
        rotation_field(),
        DomainBox::uniform(-2.0, 2.0, 2).expect("valid box"),
        false,
        false,
    ));

    models.push(entry(
        scalar_damping(),
        DomainBox::uniform(-2.0, 2.0, 1).expect("valid box"),
        false,
        false,
    ));

    // Discrete-time models.
    models.push(entry(
        linear_consensus(
            &g2,
            &unit_weights(&g2),
            TimeDomain::Discrete,
            Some(&[0.25, 0.25]),
        )
        .expect("valid model")
        .relabel("averaging_dt_pair"),
        DomainBox::uniform(-2.0, 2.0, 2).expect("valid box"),
        true,
        true,
    ));

    let tanh_mas_dt = MasDefinition::uniform(
        ring3,
        tanh_saturated(),
        TimeDomain::Discrete,
        DomainBox::unbounded(3),
        Some(0.3),
        "tanh_mas_dt_ring3",
    )
    .expect("valid MAS");
    models.push(entry(
        assemble(&tanh_mas_dt).expect("assembles"),
        DomainBox::uniform(-2.0, 2.0, 3).expect("valid box"),
        true,
        true,
    ));

    let a2 = MaxPlusMatrix::from_finite(&[&[0.0, -1.0], &[-1.0, 0.0]]).expect("valid matrix");
    models.push(entry(
        smooth_max_plus(&a2, 1.0).expect("valid model"),
        DomainBox::uniform(-2.0, 2.0, 2).expect("valid box"),
        true,
        true,
    ));

    let ln2 = std::f64::consts::LN_2;
    let balanced =
        MaxPlusMatrix::from_finite(&[&[-ln2, -ln2], &[-ln2, -ln2]]).expect("valid matrix");
    models.push(entry(
        smooth_max_plus(&balanced, 1.0)
            .expect("valid model")
            .relabel("smooth_max_plus_balanced"),
        DomainBox::uniform(-1.0, 1.0, 2).expect("valid box"),
        true,
        true,
    ));

    models.push(entry(
        max_plus(&a2).relabel("max_plus_pair"),
        DomainBox::uniform(-2.0, 2.0, 2).expect("valid box"),
        true,
        false,
    ));

    models.push(entry(
        swap_map(),
        DomainBox::uniform(-2.0, 2.0, 2).expect("valid box"),
        true,
        false,
    ));

    models.push(entry(
        shapley(&example_game()).expect("valid model"),
        DomainBox::uniform(-2.0, 2.0, 2).expect("valid box"),
        true,
        true,
    ));

    models.push(entry(
        square_map(),
        DomainBox::uniform(-2.0, 2.0, 2).expect("valid box"),
        false,
        false,
    ));

    models.push(entry(
        translation_map(1.0, 2).relabel("translation_pair"),
        DomainBox::uniform(-2.0, 2.0, 2).expect("valid box"),
        true,
        true,
    ));

    models
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::ToleranceConfig;
    use crate::dynamics::{simulate_until_convergence, Outcome, StepConfig};
    use crate::verify::numeric_jacobian;

    fn sv(v: &[f64]) -> StateVector {
        StateVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn max_plus_examples() {
        let identity = max_plus(&MaxPlusMatrix::identity(3).unwrap());
        let x = sv(&[0.5, -1.0, 2.0]);
        assert_eq!(identity.evaluate(&x).unwrap(), x);

        let a = MaxPlusMatrix::from_finite(&[&[0.0, 1.0], &[2.0, 0.0]]).unwrap();
        assert_eq!(
            max_plus(&a).evaluate(&sv(&[0.0, 0.0])).unwrap(),
            sv(&[1.0, 2.0])
        );

        // Fixed points of the standing example are the band |x1 - x2| <= 1.
        let a2 = MaxPlusMatrix::from_finite(&[&[0.0, -1.0], &[-1.0, 0.0]]).unwrap();
        let sys = max_plus(&a2);
        for x in [sv(&[0.0, 0.5]), sv(&[4.0, 5.0]), sv(&[1.0, 0.0])] {
            assert_eq!(sys.evaluate(&x).unwrap(), x);
        }
        let moved = sv(&[0.0, 3.0]);
        assert_ne!(sys.evaluate(&moved).unwrap(), moved);
    }

    #[test]
    fn max_plus_row_finiteness_enforced() {
        let entries = vec![
            MaxPlusEntry::Finite(0.0),
            MaxPlusEntry::NegInf,
            MaxPlusEntry::NegInf,
            MaxPlusEntry::NegInf,
        ];
        assert!(matches!(
            MaxPlusMatrix::new(2, entries),
            Err(ModelError::EmptyRow(1))
        ));
    }

    #[test]
    fn max_plus_parse_round_trip() {
        let text = "2\n0 -inf\n-1 0\n";
        let m = MaxPlusMatrix::parse(text).unwrap();
        assert_eq!(m.get(0, 1), MaxPlusEntry::NegInf);
        assert_eq!(m.get(1, 0), MaxPlusEntry::Finite(-1.0));
        assert!(MaxPlusMatrix::parse("2\n0 0\n").is_err());
        assert!(MaxPlusMatrix::parse("2\n0 bad\n0 0\n").is_err());
    }

    #[test]
    fn smooth_max_plus_symmetric_point() {
        // All comparands equal: the smoother exceeds the max by exactly
        // log(n)/alpha.
        let zeros = MaxPlusMatrix::from_finite(&[&[0.0, 0.0], &[0.0, 0.0]]).unwrap();
        for alpha in [1.0, 10.0] {
            let sys = smooth_max_plus(&zeros, alpha).unwrap();
            let out = sys.evaluate(&sv(&[3.0, 3.0])).unwrap();
            let expected = 3.0 + 2.0f64.ln() / alpha;
            assert!((out[0] - expected).abs() < 1e-12);
            assert!((out[1] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_max_plus_close_to_exact_at_large_alpha() {
        let a2 = MaxPlusMatrix::from_finite(&[&[0.0, -1.0], &[-1.0, 0.0]]).unwrap();
        let smooth = smooth_max_plus(&a2, 10.0).unwrap();
        let out = smooth.evaluate(&sv(&[0.0, 5.0])).unwrap();
        assert!((out[0] - 4.0).abs() < 0.01);
        assert!((out[1] - 5.0).abs() < 0.01);
    }

    #[test]
    fn smooth_max_plus_jacobian_rows_sum_to_one() {
        let a = MaxPlusMatrix::from_finite(&[&[0.0, -1.0, 2.0], &[1.0, 0.0, -2.0], &[0.5, 0.5, 0.0]])
            .unwrap();
        let sys = smooth_max_plus(&a, 5.0).unwrap();
        for x in [sv(&[0.0, 0.0, 0.0]), sv(&[1.0, -3.0, 0.5])] {
            let jac = sys.analytic_jacobian(&x).unwrap();
            for i in 0..3 {
                let row_sum: f64 = (0..3).map(|j| jac[(i, j)]).sum();
                assert!((row_sum - 1.0).abs() < 1e-9);
                assert!((0..3).all(|j| jac[(i, j)] > 0.0));
            }
            // Softmax weights must agree with finite differences.
            let numeric = numeric_jacobian(&sys, &x, 1e-6).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((jac[(i, j)] - numeric[(i, j)]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn smooth_max_plus_replaces_sentinels() {
        let entries = vec![
            MaxPlusEntry::Finite(0.0),
            MaxPlusEntry::NegInf,
            MaxPlusEntry::Finite(-1.0),
            MaxPlusEntry::Finite(0.0),
        ];
        let a = MaxPlusMatrix::new(2, entries).unwrap();
        let sys = smooth_max_plus(&a, 1.0).unwrap();
        assert!(sys.label().contains("sentinels->"));
        // The replaced entry is so deep that the first component tracks x1.
        let out = sys.evaluate(&sv(&[0.0, 30.0])).unwrap();
        assert!((out[0] - 0.0).abs() < 1e-6);
    }

    #[test]
    fn alpha_max_reference_violates_monotonicity() {
        // Raising the smaller input lowers the weighted average: the pinned
        // counterexample for the weighted-average smoother.
        let before = alpha_max_reference(&[0.0, 10.0], 1.0);
        let after = alpha_max_reference(&[0.5, 10.0], 1.0);
        assert!(
            after < before,
            "expected a monotonicity violation, got {before} -> {after}"
        );
        // While the log-sum-exp smoother is monotone on the same sample.
        let a = MaxPlusMatrix::from_finite(&[&[0.0, 0.0], &[0.0, 0.0]]).unwrap();
        let sys = smooth_max_plus(&a, 1.0).unwrap();
        let lo = sys.evaluate(&sv(&[0.0, 10.0])).unwrap();
        let hi = sys.evaluate(&sv(&[0.5, 10.0])).unwrap();
        assert!(lo.partial_leq(&hi).unwrap());
    }

    #[test]
    fn shapley_examples() {
        let trivial = StochasticGame {
            states: vec![vec![vec![GameOutcome {
                reward: 0.0,
                transition: vec![1.0],
            }]]],
        };
        let sys = shapley(&trivial).unwrap();
        assert_eq!(sys.evaluate(&sv(&[0.7])).unwrap(), sv(&[0.7]));

        let drifting = StochasticGame {
            states: vec![vec![vec![GameOutcome {
                reward: 1.0,
                transition: vec![1.0],
            }]]],
        };
        let sys = shapley(&drifting).unwrap();
        assert_eq!(sys.evaluate(&sv(&[0.0])).unwrap(), sv(&[1.0]));
        let mut cfg = ToleranceConfig::discrete();
        cfg.max_horizon = 300.0;
        let report =
            simulate_until_convergence(&sys, &sv(&[0.0]), &cfg, &StepConfig::default()).unwrap();
        assert_ne!(report.outcome, Outcome::Converged);

        // Two absorbing states with opposite rewards: width grows without
        // bound.
        let spreading = StochasticGame {
            states: vec![
                vec![vec![GameOutcome {
                    reward: 1.0,
                    transition: vec![1.0, 0.0],
                }]],
                vec![vec![GameOutcome {
                    reward: -1.0,
                    transition: vec![0.0, 1.0],
                }]],
            ],
        };
        let sys = shapley(&spreading).unwrap();
        assert_eq!(
            sys.evaluate(&sv(&[0.0, 0.0])).unwrap(),
            sv(&[1.0, -1.0])
        );
    }

    #[test]
    fn shapley_validates_probabilities() {
        let broken = StochasticGame {
            states: vec![vec![vec![GameOutcome {
                reward: 0.0,
                transition: vec![0.7],
            }]]],
        };
        assert!(matches!(
            shapley(&broken),
            Err(ModelError::BadTransitionSum { .. })
        ));
        assert!(example_game().has_positive_self_transitions());
    }

    #[test]
    fn shapley_without_self_transitions_loses_strict_order() {
        use crate::verify::{check_type_k_probe_dt, SamplePlan, Verdict};
        // State 0 always hops to state 1, so f_0 ignores x_0 and strictly
        // ordered first components collapse after one application.
        let hopping = StochasticGame {
            states: vec![
                vec![vec![GameOutcome {
                    reward: 0.2,
                    transition: vec![0.0, 1.0],
                }]],
                vec![vec![GameOutcome {
                    reward: -0.1,
                    transition: vec![0.3, 0.7],
                }]],
            ],
        };
        assert!(!hopping.has_positive_self_transitions());
        let sys = shapley(&hopping).unwrap();
        assert!(sys.label().contains("positive_self_transitions=false"));
        let plan =
            SamplePlan::new(DomainBox::uniform(-2.0, 2.0, 2).unwrap(), 50, 100, 17).unwrap();
        let cfg = ToleranceConfig::discrete();
        let report = check_type_k_probe_dt(&sys, &plan, &cfg).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
    }

    #[test]
    fn linear_consensus_examples() {
        let g = DirectedGraph::complete(2).unwrap();
        let ct = linear_consensus(&g, &unit_weights(&g), TimeDomain::Continuous, None).unwrap();
        assert_eq!(ct.evaluate(&sv(&[0.0, 2.0])).unwrap(), sv(&[2.0, -2.0]));

        let dt = linear_consensus(
            &g,
            &unit_weights(&g),
            TimeDomain::Discrete,
            Some(&[0.25, 0.25]),
        )
        .unwrap();
        let jac = dt.analytic_jacobian(&sv(&[0.0, 0.0])).unwrap();
        let expected = [[0.75, 0.25], [0.25, 0.75]];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(jac[(i, j)], expected[i][j]);
            }
        }
    }

    #[test]
    fn linear_consensus_refuses_saturating_gain() {
        // A gain exactly at 1/|N_i| zeroes the diagonal and is refused.
        let g = DirectedGraph::complete(3).unwrap();
        let eps = [0.5, 0.5, 0.5];
        let err = linear_consensus(&g, &unit_weights(&g), TimeDomain::Discrete, Some(&eps))
            .unwrap_err();
        match err {
            ModelError::EpsilonTooLarge { agent: 0, eps, bound } => {
                assert_eq!(eps, 0.5);
                assert_eq!(bound, 0.5);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn saturated_coupling_examples() {
        // s = 1, m = 2 is tanh.
        let h = saturated_coupling(SaturatedCouplingParams { s: 1.0, m: 2.0 }).unwrap();
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            assert!((h.eval(x) - x.tanh()).abs() < 1e-15);
        }
        assert_eq!(h.eval(0.0), 0.0);
        assert_eq!(h.slope_sup(), Some(1.0));

        // Large m approaches the sign function.
        let steep = saturated_coupling(SaturatedCouplingParams { s: 1.0, m: 500.0 }).unwrap();
        assert!((steep.eval(0.1) - 1.0).abs() < 1e-9);
        assert!((steep.eval(-0.1) + 1.0).abs() < 1e-9);

        assert!(saturated_coupling(SaturatedCouplingParams { s: 0.0, m: 1.0 }).is_err());
    }

    #[test]
    fn kuramoto_band_guard() {
        let pi = std::f64::consts::PI;
        let g = DirectedGraph::complete(2).unwrap();
        assert!(kuramoto_uniform(
            &g,
            sine_coupling(),
            DomainBox::uniform(0.0, pi / 4.0, 2).unwrap()
        )
        .is_ok());
        assert!(matches!(
            kuramoto_uniform(
                &g,
                sine_coupling(),
                DomainBox::uniform(0.0, pi, 2).unwrap()
            ),
            Err(ModelError::BoxExceedsMonotoneWindow { .. })
        ));
    }

    #[test]
    fn kuramoto_pair_synchronizes_at_the_mean() {
        let pi = std::f64::consts::PI;
        let g = DirectedGraph::complete(2).unwrap();
        let sys = kuramoto_uniform(
            &g,
            sine_coupling(),
            DomainBox::uniform(0.0, pi / 4.0, 2).unwrap(),
        )
        .unwrap();
        let cfg = ToleranceConfig::continuous();
        let report = simulate_until_convergence(
            &sys,
            &sv(&[0.0, pi / 8.0]),
            &cfg,
            &StepConfig::default(),
        )
        .unwrap();
        assert_eq!(report.outcome, Outcome::Converged);
        let limit = report.limit.unwrap();
        assert!((limit[0] - pi / 16.0).abs() < 1e-6);
        assert!((limit[1] - pi / 16.0).abs() < 1e-6);
    }

    #[test]
    fn chemical_exchange_field() {
        let (sys, check) = chemical(
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            Arc::new(|u: &[f64]| vec![-u[0], u[0]]),
            Some(Arc::new(|_: &[f64]| {
                DMatrix::from_row_slice(2, 1, &[-1.0, 1.0])
            })),
            DomainBox::unbounded(2),
            "exchange",
        )
        .unwrap();
        assert_eq!(check.verdict, Verdict::Pass);
        assert_eq!(sys.evaluate(&sv(&[0.0, 2.0])).unwrap(), sv(&[2.0, -2.0]));
        let jac = sys.analytic_jacobian(&sv(&[0.3, 0.4])).unwrap();
        assert_eq!(jac[(0, 1)], 1.0);
        assert_eq!(jac[(1, 0)], 1.0);

        // Zero rate: every point is an equilibrium.
        let (still, check) = chemical(
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            Arc::new(|_: &[f64]| vec![0.0, 0.0]),
            None,
            DomainBox::unbounded(2),
            "still",
        )
        .unwrap();
        assert_eq!(check.verdict, Verdict::Pass);
        assert_eq!(still.evaluate(&sv(&[5.0, -3.0])).unwrap(), sv(&[0.0, 0.0]));
    }

    #[test]
    fn chemical_reports_translation_failure() {
        // Gamma does not annihilate the ones direction here.
        let (_, check) = chemical(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            Arc::new(|u: &[f64]| vec![-u[0], u[0]]),
            None,
            DomainBox::unbounded(2),
            "skewed",
        )
        .unwrap();
        assert_eq!(check.verdict, Verdict::Fail);
    }

    #[test]
    fn conjugation_examples() {
        let ident = SystemDefinition::discrete("id", DomainBox::unbounded(2), |x| {
            x.as_slice().to_vec()
        });
        let g = to_multiplicative(&ident).unwrap();
        let u = sv(&[0.5, 3.0]);
        assert!(g.evaluate(&u).unwrap().sup_metric(&u).unwrap() < 1e-15);

        // A translation by alpha becomes scaling by e^alpha.
        let shift = translation_map(0.7, 2);
        let g = to_multiplicative(&shift).unwrap();
        let out = g.evaluate(&u).unwrap();
        let factor = 0.7f64.exp();
        assert!((out[0] - 0.5 * factor).abs() < 1e-12);
        assert!((out[1] - 3.0 * factor).abs() < 1e-12);

        // Round trip back to additive coordinates.
        let back = to_additive(&g).unwrap();
        let x = sv(&[0.2, -1.0]);
        let direct = shift.evaluate(&x).unwrap();
        assert!(back.evaluate(&x).unwrap().sup_metric(&direct).unwrap() < 1e-12);

        // Nonpositive inputs are rejected through the evaluation contract.
        assert!(g.evaluate(&sv(&[-1.0, 1.0])).is_err());
    }

    #[test]
    fn conjugated_max_plus_is_scaling_homogeneous() {
        let a2 = MaxPlusMatrix::from_finite(&[&[0.0, -1.0], &[-1.0, 0.0]]).unwrap();
        let g = to_multiplicative(&max_plus(&a2)).unwrap();
        for (lambda, u) in [(2.0, sv(&[0.5, 3.0])), (0.25, sv(&[4.0, 1.0]))] {
            let scaled = g.evaluate(&u.as_slice().iter().map(|v| lambda * v).collect::<Vec<_>>().try_into().unwrap()).unwrap();
            let direct = g.evaluate(&u).unwrap();
            for i in 0..2 {
                let rel = (scaled[i] - lambda * direct[i]).abs() / (lambda * direct[i]).abs();
                assert!(rel < 1e-9);
            }
        }
    }

    #[test]
    fn library_registry_is_complete() {
        let models = library();
        assert!(models.len() >= 15);
        // Labels are unique so reports stay unambiguous.
        let mut labels: Vec<&str> = models.iter().map(|m| m.system.label()).collect();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), models.len());
        // Every k-topical model is also topical.
        for m in &models {
            assert!(!m.k_topical || m.topical, "{}", m.system.label());
            assert!(m.sample_box.is_bounded());
            assert_eq!(m.sample_box.dim(), m.system.dim());
        }
    }
}
