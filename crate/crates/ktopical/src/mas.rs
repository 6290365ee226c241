//! Directed interaction graphs, assembly of multi-agent systems from
//! per-agent local rules, consensus conditions, and consensus runs.
//!
//! Edge convention: a stored edge `(i, j)` means agent `i` is influenced by
//! agent `j` (j is a neighbor of i), so information travels from `j` to `i`.
//! Node indices are zero-based in memory; the edge-list file format is
//! one-based.

use crate::core::{CoreError, DomainBox, StateVector, TimeDomain, ToleranceConfig};
use crate::dynamics::{
    simulate_recorded, ConvergenceReport, DynamicsError, EvalFn, Outcome, StepConfig,
    SystemDefinition,
};
use crate::verify::{
    check_metzler_ct, check_nonneg_posdiag_dt, check_plus_homogeneity, CheckReport, SamplePlan,
    Verdict, VerifyError, Witness,
};
use nalgebra::DMatrix;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MasError {
    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("self-loop ({0}, {0}) is not allowed; self-dependence is implicit")]
    SelfLoop(usize),
    #[error("graph needs at least one node")]
    EmptyGraph,
    #[error("agent {agent}: missing coupling for neighbor {neighbor}")]
    MissingCoupling { agent: usize, neighbor: usize },
    #[error("agent {agent}: coupling declared for {neighbor}, which is not a neighbor")]
    ExtraCoupling { agent: usize, neighbor: usize },
    #[error("expected one rule per node in order, got rule for agent {got} at position {position}")]
    RuleOrder { position: usize, got: usize },
    #[error("expected {n} rules, got {got}")]
    RuleCount { n: usize, got: usize },
    #[error("agent {agent}: discrete-time coupled rules need a step gain eps > 0")]
    MissingEpsilon { agent: usize },
    #[error("agent {agent}: step gain {eps} is not strictly positive")]
    NonPositiveEpsilon { agent: usize, eps: f64 },
    #[error("slope supremum must be strictly positive, got {0}")]
    NonPositiveSlope(f64),
    #[error("step gain bound requires a coupled rule with explicit couplings")]
    UnboundedRule,
    #[error("graph file: {0}")]
    ParseError(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// A directed interaction graph. `neighbors(i)` lists the agents whose
/// states enter agent i's local rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, MasError> {
        if n == 0 {
            return Err(MasError::EmptyGraph);
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n {
                return Err(MasError::NodeOutOfRange { index: i, n });
            }
            if j >= n {
                return Err(MasError::NodeOutOfRange { index: j, n });
            }
            if i == j {
                return Err(MasError::SelfLoop(i));
            }
            set.insert((i, j));
        }
        Ok(DirectedGraph { n, edges: set })
    }

    /// Every ordered pair of distinct nodes.
    pub fn complete(n: usize) -> Result<Self, MasError> {
        let edges = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
        DirectedGraph::new(n, edges)
    }

    /// Each node influenced by its successor: (i, i+1 mod n).
    pub fn directed_cycle(n: usize) -> Result<Self, MasError> {
        DirectedGraph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    /// Ring with influence in both directions.
    pub fn bidirectional_ring(n: usize) -> Result<Self, MasError> {
        let edges = (0..n).flat_map(|i| [(i, (i + 1) % n), (i, (i + n - 1) % n)]);
        DirectedGraph::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(a, _)| *a == i)
            .map(|&(_, b)| b)
            .collect()
    }

    /// Parses the edge-list format: a first line `n <count>` followed by one
    /// `i j` pair per line, one-based.
    pub fn parse_edge_list(text: &str) -> Result<Self, MasError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| MasError::ParseError("empty file".into()))?;
        let mut parts = header.split_whitespace();
        let n = match (parts.next(), parts.next(), parts.next()) {
            (Some("n"), Some(count), None) => count
                .parse::<usize>()
                .map_err(|e| MasError::ParseError(format!("bad node count `{count}`: {e}")))?,
            _ => {
                return Err(MasError::ParseError(format!(
                    "expected header `n <count>`, got `{header}`"
                )))
            }
        };
        let mut edges = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(MasError::ParseError(format!(
                    "expected `i j` pair, got `{line}`"
                )));
            }
            let parse = |s: &str| -> Result<usize, MasError> {
                let v = s
                    .parse::<usize>()
                    .map_err(|e| MasError::ParseError(format!("bad node id `{s}`: {e}")))?;
                if v == 0 || v > n {
                    return Err(MasError::ParseError(format!(
                        "node id {v} outside 1..={n}"
                    )));
                }
                Ok(v - 1)
            };
            edges.push((parse(fields[0])?, parse(fields[1])?));
        }
        DirectedGraph::new(n, edges)
    }

    fn reachable_over(&self, start: usize, reversed: bool) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &(a, b) in &self.edges {
                let (from, to) = if reversed { (b, a) } else { (a, b) };
                if from == u && seen.insert(to) {
                    stack.push(to);
                }
            }
        }
        seen
    }

    /// Nodes r such that every node has a directed path to r along influence
    /// edges, i.e. information originating at r reaches every agent.
    /// Computed by reachability from r over reversed influence edges.
    pub fn globally_reachable_nodes(&self) -> BTreeSet<usize> {
        (0..self.n)
            .filter(|&r| self.reachable_over(r, true).len() == self.n)
            .collect()
    }

    /// The opposite orientation: nodes r that reach every node along the
    /// influence edges as stored. Reported alongside the primary set so
    /// both readings of the reachability condition are visible.
    pub fn globally_reachable_forward(&self) -> BTreeSet<usize> {
        (0..self.n)
            .filter(|&r| self.reachable_over(r, false).len() == self.n)
            .collect()
    }

    /// Per-node forward closures along influence edges: element i holds
    /// every node reachable from i (including i itself).
    pub fn reachable_sets(&self) -> Vec<BTreeSet<usize>> {
        (0..self.n).map(|i| self.reachable_over(i, false)).collect()
    }

    pub fn reachability_summary(&self) -> ReachabilitySummary {
        ReachabilitySummary {
            information_roots: self.globally_reachable_nodes(),
            forward_roots: self.globally_reachable_forward(),
        }
    }
}

/// Globally reachable nodes under both edge orientations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReachabilitySummary {
    /// Primary convention: information from these nodes reaches every agent.
    pub information_roots: BTreeSet<usize>,
    pub forward_roots: BTreeSet<usize>,
}

/// A scalar coupling h applied to state differences x_j - x_i, optionally
/// with an analytic derivative and a supremum of that derivative.
#[derive(Clone)]
pub struct Coupling {
    name: String,
    h: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    dh: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    slope_sup: Option<f64>,
}

impl fmt::Debug for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coupling")
            .field("name", &self.name)
            .field("slope_sup", &self.slope_sup)
            .finish()
    }
}

impl Coupling {
    pub fn new(name: impl Into<String>, h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coupling {
            name: name.into(),
            h: Arc::new(h),
            dh: None,
            slope_sup: None,
        }
    }

    pub fn with_derivative(mut self, dh: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.dh = Some(Arc::new(dh));
        self
    }

    pub fn with_slope_sup(mut self, slope_sup: f64) -> Self {
        self.slope_sup = Some(slope_sup);
        self
    }

    /// h(x) = x.
    pub fn identity() -> Self {
        Coupling::new("identity", |x| x)
            .with_derivative(|_| 1.0)
            .with_slope_sup(1.0)
    }

    /// h(x) = w*x for a positive edge weight.
    pub fn linear(weight: f64) -> Self {
        Coupling::new(format!("linear(w={weight})"), move |x| weight * x)
            .with_derivative(move |_| weight)
            .with_slope_sup(weight)
    }

    /// h(x) = sin(x), increasing on (-pi/2, pi/2).
    pub fn sine() -> Self {
        Coupling::new("sine", f64::sin)
            .with_derivative(f64::cos)
            .with_slope_sup(1.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.h)(x)
    }

    pub fn derivative(&self, x: f64) -> Option<f64> {
        self.dh.as_ref().map(|d| d(x))
    }

    pub fn slope_sup(&self) -> Option<f64> {
        self.slope_sup
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// A scalar rule over (own state, neighbor states in ascending neighbor
/// order).
pub type GeneralRuleFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Per-agent local interaction rule.
#[derive(Clone)]
pub enum LocalRule {
    /// Sum-of-couplings form: u_i = sum over neighbors of h_ij(x_j - x_i).
    /// Continuous time uses the field x_i' = u_i; discrete time uses the
    /// update x_i + eps_i * u_i.
    Coupled {
        agent: usize,
        couplings: BTreeMap<usize, Coupling>,
        eps: Option<f64>,
    },
    /// An arbitrary scalar rule; passed through unchanged by assembly.
    General { agent: usize, rule: GeneralRuleFn },
}

impl fmt::Debug for LocalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalRule::Coupled { agent, couplings, eps } => f
                .debug_struct("Coupled")
                .field("agent", agent)
                .field("neighbors", &couplings.keys().collect::<Vec<_>>())
                .field("eps", eps)
                .finish(),
            LocalRule::General { agent, .. } => {
                f.debug_struct("General").field("agent", agent).finish()
            }
        }
    }
}

impl LocalRule {
    pub fn coupled(
        agent: usize,
        couplings: impl IntoIterator<Item = (usize, Coupling)>,
        eps: Option<f64>,
    ) -> Self {
        LocalRule::Coupled {
            agent,
            couplings: couplings.into_iter().collect(),
            eps,
        }
    }

    /// The same coupling toward every declared neighbor.
    pub fn uniform(agent: usize, neighbors: &[usize], coupling: Coupling, eps: Option<f64>) -> Self {
        LocalRule::coupled(
            agent,
            neighbors.iter().map(|&j| (j, coupling.clone())),
            eps,
        )
    }

    pub fn general(
        agent: usize,
        rule: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        LocalRule::General {
            agent,
            rule: Arc::new(rule),
        }
    }

    pub fn agent(&self) -> usize {
        match self {
            LocalRule::Coupled { agent, .. } | LocalRule::General { agent, .. } => *agent,
        }
    }

    pub fn neighbor_count(&self) -> Option<usize> {
        match self {
            LocalRule::Coupled { couplings, .. } => Some(couplings.len()),
            LocalRule::General { .. } => None,
        }
    }
}

/// Strict upper bound on the discrete-time step gain eps_i keeping the
/// assembled Jacobian row nonnegative with a strictly positive diagonal:
/// 1 / (|N_i| * sup h'). Rules without neighbors impose no bound.
pub fn epsilon_bound(rule: &LocalRule, slope_sup: f64) -> Result<f64, MasError> {
    if !(slope_sup > 0.0) || !slope_sup.is_finite() {
        return Err(MasError::NonPositiveSlope(slope_sup));
    }
    let count = rule.neighbor_count().ok_or(MasError::UnboundedRule)?;
    if count == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (count as f64 * slope_sup))
}

/// A multi-agent system: graph, one local rule per node, time domain, and
/// the state-space box of the assembled system.
#[derive(Debug, Clone)]
pub struct MasDefinition {
    graph: DirectedGraph,
    rules: Vec<LocalRule>,
    time_domain: TimeDomain,
    domain: DomainBox,
    label: String,
}

impl MasDefinition {
    pub fn new(
        graph: DirectedGraph,
        rules: Vec<LocalRule>,
        time_domain: TimeDomain,
        domain: DomainBox,
        label: impl Into<String>,
    ) -> Result<Self, MasError> {
        let n = graph.n();
        if rules.len() != n {
            return Err(MasError::RuleCount {
                n,
                got: rules.len(),
            });
        }
        if domain.dim() != n {
            return Err(CoreError::DimensionMismatch {
                left: domain.dim(),
                right: n,
            }
            .into());
        }
        for (position, rule) in rules.iter().enumerate() {
            if rule.agent() != position {
                return Err(MasError::RuleOrder {
                    position,
                    got: rule.agent(),
                });
            }
            if let LocalRule::Coupled {
                agent,
                couplings,
                eps,
            } = rule
            {
                let neighbors: BTreeSet<usize> = graph.neighbors(*agent).into_iter().collect();
                for &j in couplings.keys() {
                    if !neighbors.contains(&j) {
                        return Err(MasError::ExtraCoupling {
                            agent: *agent,
                            neighbor: j,
                        });
                    }
                }
                for &j in &neighbors {
                    if !couplings.contains_key(&j) {
                        return Err(MasError::MissingCoupling {
                            agent: *agent,
                            neighbor: j,
                        });
                    }
                }
                match (time_domain, eps) {
                    (TimeDomain::Discrete, None) => {
                        return Err(MasError::MissingEpsilon { agent: *agent })
                    }
                    (TimeDomain::Discrete, Some(e)) if !(*e > 0.0) => {
                        return Err(MasError::NonPositiveEpsilon {
                            agent: *agent,
                            eps: *e,
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(MasDefinition {
            graph,
            rules,
            time_domain,
            domain,
            label: label.into(),
        })
    }

    /// The same coupling on every edge and the same step gain at every node.
    pub fn uniform(
        graph: DirectedGraph,
        coupling: Coupling,
        time_domain: TimeDomain,
        domain: DomainBox,
        eps: Option<f64>,
        label: impl Into<String>,
    ) -> Result<Self, MasError> {
        let rules = (0..graph.n())
            .map(|i| LocalRule::uniform(i, &graph.neighbors(i), coupling.clone(), eps))
            .collect();
        MasDefinition::new(graph, rules, time_domain, domain, label)
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn rules(&self) -> &[LocalRule] {
        &self.rules
    }

    pub fn time_domain(&self) -> TimeDomain {
        self.time_domain
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Builds the global system from the local rules. When every rule is a
/// coupled rule with analytic coupling derivatives, the assembled system
/// carries an analytic Jacobian.
pub fn assemble(mas: &MasDefinition) -> Result<SystemDefinition, MasError> {
    let n = mas.graph.n();
    let time_domain = mas.time_domain;
    let neighbor_lists: Vec<Vec<usize>> = (0..n).map(|i| mas.graph.neighbors(i)).collect();
    let rules = mas.rules.clone();

    let rules_for_eval = rules.clone();
    let lists_for_eval = neighbor_lists.clone();
    let eval: EvalFn = Arc::new(move |x: &StateVector| {
        (0..n)
            .map(|i| match &rules_for_eval[i] {
                LocalRule::Coupled {
                    couplings, eps, ..
                } => {
                    let u: f64 = couplings
                        .iter()
                        .map(|(&j, h)| h.eval(x[j] - x[i]))
                        .sum();
                    match time_domain {
                        TimeDomain::Continuous => u,
                        TimeDomain::Discrete => x[i] + eps.unwrap_or(1.0) * u,
                    }
                }
                LocalRule::General { rule, .. } => {
                    let neighbor_states: Vec<f64> =
                        lists_for_eval[i].iter().map(|&j| x[j]).collect();
                    rule(x[i], &neighbor_states)
                }
            })
            .collect()
    });

    let mut sys = SystemDefinition::new(
        mas.label.clone(),
        time_domain,
        mas.domain.clone(),
        eval,
    );

    let all_differentiable = rules.iter().all(|r| match r {
        LocalRule::Coupled { couplings, .. } => {
            couplings.values().all(|c| c.derivative(0.0).is_some())
        }
        LocalRule::General { .. } => false,
    });
    if all_differentiable {
        let rules_for_jac = rules;
        sys = sys.with_jacobian(move |x: &StateVector| {
            let mut jac = DMatrix::zeros(n, n);
            for (i, rule) in rules_for_jac.iter().enumerate() {
                if let LocalRule::Coupled { couplings, eps, .. } = rule {
                    let mut diag_sum = 0.0;
                    for (&j, h) in couplings {
                        let slope = h
                            .derivative(x[j] - x[i])
                            .expect("couplings checked differentiable");
                        diag_sum += slope;
                        jac[(i, j)] = match time_domain {
                            TimeDomain::Continuous => slope,
                            TimeDomain::Discrete => eps.unwrap_or(1.0) * slope,
                        };
                    }
                    jac[(i, i)] = match time_domain {
                        TimeDomain::Continuous => -diag_sum,
                        TimeDomain::Discrete => 1.0 - eps.unwrap_or(1.0) * diag_sum,
                    };
                }
            }
            jac
        });
    }
    Ok(sys)
}

/// Verdicts for the four consensus conditions: (i) the structural Jacobian
/// sign condition, (ii) plus-homogeneity of the assembled rule, (iii) the
/// origin is an equilibrium, (iv) the graph has a globally reachable node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusConditions {
    pub structure: CheckReport,
    pub plus_homogeneity: CheckReport,
    pub zero_equilibrium: CheckReport,
    pub reachability: CheckReport,
    pub reachability_sets: ReachabilitySummary,
    pub all_pass: bool,
}

pub fn check_consensus_conditions(
    mas: &MasDefinition,
    plan: &SamplePlan,
    cfg: &ToleranceConfig,
) -> Result<ConsensusConditions, MasError> {
    let sys = assemble(mas)?;
    let structure = match mas.time_domain {
        TimeDomain::Continuous => check_metzler_ct(&sys, plan, cfg)?,
        TimeDomain::Discrete => check_nonneg_posdiag_dt(&sys, plan, cfg)?,
    };
    let plus_homogeneity = check_plus_homogeneity(&sys, plan, cfg)?;

    let zero = StateVector::zeros(sys.dim())?;
    let f0 = sys.evaluate(&zero)?;
    let residual = match mas.time_domain {
        TimeDomain::Continuous => f0.max_abs(),
        TimeDomain::Discrete => f0.sup_metric(&zero)?,
    };
    let zero_equilibrium = if residual < cfg.eq_tol {
        CheckReport {
            name: "zero_equilibrium".into(),
            verdict: Verdict::Pass,
            sample_based: false,
            samples_checked: 1,
            violations: 0,
            witnesses: Vec::new(),
            note: format!("|f(0)| residual = {residual:.3e}"),
        }
    } else {
        CheckReport {
            name: "zero_equilibrium".into(),
            verdict: Verdict::Fail,
            sample_based: false,
            samples_checked: 1,
            violations: 1,
            witnesses: vec![Witness {
                points: vec![zero.as_slice().to_vec()],
                entry: None,
                component: None,
                alpha: None,
                observed: residual,
                margin: residual - cfg.eq_tol,
                description: format!("|f(0)| residual = {residual} >= {}", cfg.eq_tol),
            }],
            note: String::new(),
        }
    };

    let reachability_sets = mas.graph.reachability_summary();
    let roots = &reachability_sets.information_roots;
    let reachability = CheckReport {
        name: "globally_reachable_node".into(),
        verdict: if roots.is_empty() {
            Verdict::Fail
        } else {
            Verdict::Pass
        },
        sample_based: false,
        samples_checked: mas.graph.n(),
        violations: usize::from(roots.is_empty()),
        witnesses: Vec::new(),
        note: format!(
            "information roots {roots:?}; forward-orientation roots {:?}",
            reachability_sets.forward_roots
        ),
    };

    let all_pass = [&structure, &plus_homogeneity, &zero_equilibrium, &reachability]
        .iter()
        .all(|c| c.passed());
    Ok(ConsensusConditions {
        structure,
        plus_homogeneity,
        zero_equilibrium,
        reachability,
        reachability_sets,
        all_pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusOutcome {
    Consensus,
    EquilibriumNonConsensus,
    NoConvergence,
}

impl fmt::Display for ConsensusOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ConsensusOutcome::Consensus => "consensus",
            ConsensusOutcome::EquilibriumNonConsensus => "equilibrium_non_consensus",
            ConsensusOutcome::NoConvergence => "no_convergence",
        };
        write!(f, "{name}")
    }
}

/// Summary of the consensus residual along the sampled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthTrace {
    pub initial: f64,
    pub peak: f64,
    pub last: f64,
    /// Whether the width never grew by more than eq_tol between samples.
    pub nonincreasing: bool,
}

impl WidthTrace {
    fn from_states(states: &[StateVector], eq_tol: f64) -> Self {
        let widths: Vec<f64> = states.iter().map(StateVector::width).collect();
        WidthTrace {
            initial: widths.first().copied().unwrap_or(0.0),
            peak: widths.iter().copied().fold(0.0, f64::max),
            last: widths.last().copied().unwrap_or(0.0),
            nonincreasing: widths.windows(2).all(|w| w[1] <= w[0] + eq_tol),
        }
    }
}

/// Result of one consensus run. `consensus_value` is the mean of the limit
/// components and is only reported when the limit lies on the consensus
/// line within the convergence tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusRun {
    pub outcome: ConsensusOutcome,
    pub consensus_value: Option<f64>,
    pub final_width: f64,
    pub width_trace: WidthTrace,
    pub convergence: ConvergenceReport,
}

/// Assembles and simulates the system from `xi`, classifying the outcome by
/// convergence and the width of the limit. The underlying run stops on a
/// residual 100x tighter than `convergence_tol` so that a limit passing the
/// width gate has actually settled to that accuracy; a consecutive-sample
/// residual alone underestimates the remaining distance by the local
/// contraction rate.
pub fn run_consensus(
    mas: &MasDefinition,
    xi: &StateVector,
    cfg: &ToleranceConfig,
    step: &StepConfig,
) -> Result<ConsensusRun, MasError> {
    let sys = assemble(mas)?;
    let mut sim_cfg = *cfg;
    sim_cfg.convergence_tol = cfg.convergence_tol / 100.0;
    let (convergence, traj) = simulate_recorded(&sys, xi, &sim_cfg, step)?;
    let width_trace = WidthTrace::from_states(traj.states(), cfg.eq_tol);
    let final_state = traj.last().expect("simulation records at least x(0)").1;
    let final_width = final_state.width();
    let run = match (&convergence.outcome, &convergence.limit) {
        (Outcome::Converged, Some(limit)) => {
            let width = limit.width();
            if width < cfg.convergence_tol {
                ConsensusRun {
                    outcome: ConsensusOutcome::Consensus,
                    consensus_value: Some(limit.mean()),
                    final_width: width,
                    width_trace,
                    convergence,
                }
            } else {
                ConsensusRun {
                    outcome: ConsensusOutcome::EquilibriumNonConsensus,
                    consensus_value: None,
                    final_width: width,
                    width_trace,
                    convergence,
                }
            }
        }
        _ => ConsensusRun {
            outcome: ConsensusOutcome::NoConvergence,
            consensus_value: None,
            final_width,
            width_trace,
            convergence,
        },
    };
    Ok(run)
}

/// Conditions plus a run from one initial state; the shape written by the
/// command-line front end.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusReport {
    pub label: String,
    pub conditions: ConsensusConditions,
    pub run: ConsensusRun,
}

pub fn consensus_report(
    mas: &MasDefinition,
    xi: &StateVector,
    plan: &SamplePlan,
    cfg: &ToleranceConfig,
    step: &StepConfig,
) -> Result<ConsensusReport, MasError> {
    Ok(ConsensusReport {
        label: mas.label().to_string(),
        conditions: check_consensus_conditions(mas, plan, cfg)?,
        run: run_consensus(mas, xi, cfg, step)?,
    })
}
