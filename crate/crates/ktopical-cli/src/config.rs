//! Run configuration: a single JSON document with a version field.
//! Unknown keys are errors, not warnings, so archived configs stay
//! reproducible.

use anyhow::{anyhow, bail, Context, Result};
use ktopical::core::{DomainBox, StateVector, TimeDomain, ToleranceConfig};
use ktopical::dynamics::{StepConfig, SystemDefinition};
use ktopical::mas::{Coupling, DirectedGraph, MasDefinition};
use ktopical::models::{
    self, MaxPlusEntry, MaxPlusMatrix, SaturatedCouplingParams, StochasticGame,
};
use ktopical::verify::SamplePlan;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub model: ModelSpec,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default)]
    pub tolerances: Option<ToleranceSpec>,
    #[serde(default)]
    pub plan: PlanSpec,
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub stride: f64,
    #[serde(default)]
    pub horizon: Option<f64>,
}

fn default_dt() -> f64 {
    0.01
}

fn default_stride() -> f64 {
    0.1
}

impl Default for TimeSpec {
    fn default() -> Self {
        TimeSpec {
            dt: default_dt(),
            stride: default_stride(),
            horizon: None,
        }
    }
}

/// Partial overrides on top of the per-domain tolerance defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub eq_tol: Option<f64>,
    pub strict_margin: Option<f64>,
    pub fd_step: Option<f64>,
    pub convergence_tol: Option<f64>,
    pub max_horizon: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub sample_box: Option<BoxSpec>,
    #[serde(default = "default_samples")]
    pub n_points: usize,
    #[serde(default = "default_samples")]
    pub n_pairs: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub probe_points: Vec<Vec<f64>>,
}

fn default_seed() -> u64 {
    42
}

fn default_samples() -> usize {
    200
}

fn default_alphas() -> Vec<f64> {
    vec![-1.0, 0.5, 1.0]
}

impl Default for PlanSpec {
    fn default() -> Self {
        PlanSpec {
            seed: default_seed(),
            sample_box: None,
            n_points: default_samples(),
            n_pairs: default_samples(),
            alphas: default_alphas(),
            probe_points: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSpec {
    pub fn build(&self) -> Result<DomainBox> {
        Ok(DomainBox::new(self.lower.clone(), self.upper.clone())?)
    }
}

/// Either a path to an edge-list file or an inline node count plus
/// one-based edge pairs.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub edges: Option<Vec<(usize, usize)>>,
}

impl GraphSpec {
    pub fn build(&self, base_dir: &Path) -> Result<DirectedGraph> {
        match (&self.file, self.n, &self.edges) {
            (Some(file), None, None) => {
                let path = resolve(base_dir, file);
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("graph file `{}`", path.display()))?;
                Ok(DirectedGraph::parse_edge_list(&text)?)
            }
            (None, Some(n), Some(edges)) => {
                let mut zero_based = Vec::with_capacity(edges.len());
                for &(i, j) in edges {
                    if i == 0 || j == 0 || i > n || j > n {
                        bail!("graph edges: node id ({i}, {j}) outside 1..={n}");
                    }
                    zero_based.push((i - 1, j - 1));
                }
                Ok(DirectedGraph::new(n, zero_based)?)
            }
            _ => bail!("graph: give either `file` or both `n` and `edges`"),
        }
    }
}

/// A max-plus matrix entry: a number or the string "-inf".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MaxPlusEntrySpec {
    Finite(f64),
    Sentinel(String),
}

impl MaxPlusEntrySpec {
    fn build(&self) -> Result<MaxPlusEntry> {
        match self {
            MaxPlusEntrySpec::Finite(v) => Ok(MaxPlusEntry::Finite(*v)),
            MaxPlusEntrySpec::Sentinel(s) if s == "-inf" => Ok(MaxPlusEntry::NegInf),
            MaxPlusEntrySpec::Sentinel(s) => bail!("matrix: bad entry `{s}` (want a number or \"-inf\")"),
        }
    }
}

fn build_matrix(
    matrix: &Option<Vec<Vec<MaxPlusEntrySpec>>>,
    matrix_file: &Option<String>,
    base_dir: &Path,
) -> Result<MaxPlusMatrix> {
    match (matrix, matrix_file) {
        (Some(rows), None) => {
            let n = rows.len();
            let mut entries = Vec::with_capacity(n * n);
            for row in rows {
                if row.len() != n {
                    bail!("matrix: expected {n} entries per row, got {}", row.len());
                }
                for e in row {
                    entries.push(e.build()?);
                }
            }
            Ok(MaxPlusMatrix::new(n, entries)?)
        }
        (None, Some(file)) => {
            let path = resolve(base_dir, file);
            let text = fs::read_to_string(&path)
                .with_context(|| format!("matrix file `{}`", path.display()))?;
            Ok(MaxPlusMatrix::parse(&text)?)
        }
        _ => bail!("model: give either `matrix` or `matrix_file`"),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingSpec {
    Identity,
    Sine,
    Linear { weight: f64 },
    Saturated { s: f64, m: f64 },
}

impl CouplingSpec {
    pub fn build(&self) -> Result<Coupling> {
        Ok(match self {
            CouplingSpec::Identity => Coupling::identity(),
            CouplingSpec::Sine => Coupling::sine(),
            CouplingSpec::Linear { weight } => Coupling::linear(*weight),
            CouplingSpec::Saturated { s, m } => {
                models::saturated_coupling(SaturatedCouplingParams { s: *s, m: *m })?
            }
        })
    }
}

/// One-based weighted edge.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    LinearConsensus {
        graph: GraphSpec,
        time_domain: TimeDomain,
        #[serde(default)]
        weights: Option<Vec<WeightSpec>>,
        #[serde(default)]
        eps: Option<Vec<f64>>,
    },
    Mas {
        graph: GraphSpec,
        coupling: CouplingSpec,
        time_domain: TimeDomain,
        #[serde(default)]
        eps: Option<f64>,
        #[serde(default)]
        domain: Option<BoxSpec>,
    },
    MaxPlus {
        #[serde(default)]
        matrix: Option<Vec<Vec<MaxPlusEntrySpec>>>,
        #[serde(default)]
        matrix_file: Option<String>,
    },
    SmoothMaxPlus {
        #[serde(default)]
        matrix: Option<Vec<Vec<MaxPlusEntrySpec>>>,
        #[serde(default)]
        matrix_file: Option<String>,
        alpha: f64,
    },
    Shapley {
        game_file: String,
    },
    Kuramoto {
        graph: GraphSpec,
        band: BoxSpec,
    },
    Swap,
    Rotation,
    Square,
    Translation {
        offset: f64,
        dim: usize,
    },
    Identity {
        dim: usize,
    },
}

/// A built model: consensus commands need the multi-agent structure, the
/// rest operate on the assembled system.
pub enum BuiltModel {
    System(SystemDefinition),
    Mas(MasDefinition),
}

impl BuiltModel {
    pub fn system(&self) -> Result<SystemDefinition> {
        Ok(match self {
            BuiltModel::System(sys) => sys.clone(),
            BuiltModel::Mas(mas) => ktopical::mas::assemble(mas)?,
        })
    }

    pub fn mas(&self) -> Result<&MasDefinition> {
        match self {
            BuiltModel::Mas(mas) => Ok(mas),
            BuiltModel::System(sys) => Err(anyhow!(
                "model `{}` has no multi-agent structure; use a `mas` or `linear_consensus` model",
                sys.label()
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epsilon,
    Alpha,
    Seed,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepAxis::Epsilon => write!(f, "epsilon"),
            SweepAxis::Alpha => write!(f, "alpha"),
            SweepAxis::Seed => write!(f, "seed"),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("config file `{}`", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("config file `{}`", path.display()))?;
        if config.version != CONFIG_VERSION {
            bail!(
                "config key `version`: expected {CONFIG_VERSION}, got {}",
                config.version
            );
        }
        if config.time.dt <= 0.0 || config.time.stride <= 0.0 {
            bail!("config key `time`: dt and stride must be strictly positive");
        }
        if let Some(sweep) = &config.sweep {
            if sweep.values.is_empty() {
                bail!("config key `sweep.values`: sweep axis must not be empty");
            }
        }
        Ok(config)
    }

    pub fn build_model(&self, base_dir: &Path) -> Result<BuiltModel> {
        self.build_model_spec(&self.model, base_dir)
    }

    /// Rebuilds the model with every step gain replaced by `eps`; only
    /// meaningful for the discrete-time multi-agent model kinds.
    pub fn build_model_with_eps(&self, base_dir: &Path, eps: f64) -> Result<BuiltModel> {
        match &self.model {
            ModelSpec::LinearConsensus {
                graph,
                time_domain,
                weights,
                ..
            } => {
                let n = graph.build(base_dir)?.n();
                self.build_model_spec(
                    &ModelSpec::LinearConsensus {
                        graph: GraphSpec {
                            file: graph.file.clone(),
                            n: graph.n,
                            edges: graph.edges.clone(),
                        },
                        time_domain: *time_domain,
                        weights: weights.clone(),
                        eps: Some(vec![eps; n]),
                    },
                    base_dir,
                )
            }
            ModelSpec::Mas {
                graph,
                coupling,
                time_domain,
                domain,
                ..
            } => self.build_model_spec(
                &ModelSpec::Mas {
                    graph: GraphSpec {
                        file: graph.file.clone(),
                        n: graph.n,
                        edges: graph.edges.clone(),
                    },
                    coupling: coupling.clone(),
                    time_domain: *time_domain,
                    eps: Some(eps),
                    domain: domain.clone(),
                },
                base_dir,
            ),
            _ => bail!("sweep axis `epsilon` needs a `mas` or `linear_consensus` model"),
        }
    }

    /// Rebuilds a smoothed max-plus model with a new sharpness, returning
    /// the smooth system together with the exact map it approximates.
    pub fn build_model_with_alpha(
        &self,
        base_dir: &Path,
        alpha: f64,
    ) -> Result<(SystemDefinition, SystemDefinition)> {
        match &self.model {
            ModelSpec::SmoothMaxPlus {
                matrix,
                matrix_file,
                ..
            } => {
                let m = build_matrix(matrix, matrix_file, base_dir)?;
                Ok((models::smooth_max_plus(&m, alpha)?, models::max_plus(&m)))
            }
            _ => bail!("sweep axis `alpha` needs a `smooth_max_plus` model"),
        }
    }

    fn build_model_spec(&self, spec: &ModelSpec, base_dir: &Path) -> Result<BuiltModel> {
        Ok(match spec {
            ModelSpec::LinearConsensus {
                graph,
                time_domain,
                weights,
                eps,
            } => {
                let g = graph.build(base_dir)?;
                let weight_map = match weights {
                    None => models::unit_weights(&g),
                    Some(list) => {
                        let mut map = BTreeMap::new();
                        for spec in list {
                            if spec.i == 0 || spec.j == 0 || spec.i > g.n() || spec.j > g.n() {
                                bail!(
                                    "config key `model.weights`: edge ({}, {}) outside 1..={}",
                                    spec.i,
                                    spec.j,
                                    g.n()
                                );
                            }
                            map.insert((spec.i - 1, spec.j - 1), spec.w);
                        }
                        map
                    }
                };
                let mas = models::linear_consensus_mas(
                    &g,
                    &weight_map,
                    *time_domain,
                    eps.as_deref(),
                )?;
                BuiltModel::Mas(mas)
            }
            ModelSpec::Mas {
                graph,
                coupling,
                time_domain,
                eps,
                domain,
            } => {
                let g = graph.build(base_dir)?;
                let n = g.n();
                let domain = match domain {
                    Some(b) => b.build()?,
                    None => DomainBox::unbounded(n),
                };
                let mas = MasDefinition::uniform(
                    g,
                    coupling.build()?,
                    *time_domain,
                    domain,
                    *eps,
                    format!("mas(n={n})"),
                )?;
                BuiltModel::Mas(mas)
            }
            ModelSpec::MaxPlus {
                matrix,
                matrix_file,
            } => BuiltModel::System(models::max_plus(&build_matrix(
                matrix,
                matrix_file,
                base_dir,
            )?)),
            ModelSpec::SmoothMaxPlus {
                matrix,
                matrix_file,
                alpha,
            } => BuiltModel::System(models::smooth_max_plus(
                &build_matrix(matrix, matrix_file, base_dir)?,
                *alpha,
            )?),
            ModelSpec::Shapley { game_file } => {
                let path = resolve(base_dir, game_file);
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("game file `{}`", path.display()))?;
                let game = StochasticGame::parse(&text)?;
                BuiltModel::System(models::shapley(&game)?)
            }
            ModelSpec::Kuramoto { graph, band } => {
                let g = graph.build(base_dir)?;
                BuiltModel::System(models::kuramoto_uniform(
                    &g,
                    models::sine_coupling(),
                    band.build()?,
                )?)
            }
            ModelSpec::Swap => BuiltModel::System(models::swap_map()),
            ModelSpec::Rotation => BuiltModel::System(models::rotation_field()),
            ModelSpec::Square => BuiltModel::System(models::square_map()),
            ModelSpec::Translation { offset, dim } => {
                BuiltModel::System(models::translation_map(*offset, *dim))
            }
            ModelSpec::Identity { dim } => {
                let d = *dim;
                if d == 0 {
                    bail!("config key `model.dim`: must be at least 1");
                }
                let sys = SystemDefinition::discrete(
                    format!("identity(dim={d})"),
                    DomainBox::unbounded(d),
                    |x: &StateVector| x.as_slice().to_vec(),
                )
                .with_jacobian(move |_| nalgebra::DMatrix::identity(d, d));
                BuiltModel::System(sys)
            }
        })
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            dt: self.time.dt,
            stride: self.time.stride,
        }
    }

    /// Domain defaults overlaid with the explicit tolerance overrides and
    /// the time horizon.
    pub fn tolerances_for(&self, domain: TimeDomain) -> Result<ToleranceConfig> {
        let mut cfg = ToleranceConfig::for_domain(domain);
        if let Some(t) = &self.tolerances {
            if let Some(v) = t.eq_tol {
                cfg.eq_tol = v;
            }
            if let Some(v) = t.strict_margin {
                cfg.strict_margin = v;
            }
            if let Some(v) = t.fd_step {
                cfg.fd_step = v;
            }
            if let Some(v) = t.convergence_tol {
                cfg.convergence_tol = v;
            }
            if let Some(v) = t.max_horizon {
                cfg.max_horizon = v;
            }
        }
        if let Some(h) = self.time.horizon {
            cfg.max_horizon = h;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The sampling plan for a model of dimension `dim`, defaulting to the
    /// box [-2, 2]^dim. `seed_override` comes from the command line.
    pub fn sample_plan(&self, dim: usize, seed_override: Option<u64>) -> Result<SamplePlan> {
        let sample_box = match &self.plan.sample_box {
            Some(b) => b.build()?,
            None => DomainBox::uniform(-2.0, 2.0, dim)?,
        };
        if sample_box.dim() != dim {
            bail!(
                "config key `plan.sample_box`: dimension {} does not match the model dimension {dim}",
                sample_box.dim()
            );
        }
        let seed = seed_override.unwrap_or(self.plan.seed);
        let plan = SamplePlan::new(sample_box, self.plan.n_points, self.plan.n_pairs, seed)?
            .with_alphas(self.plan.alphas.clone())
            .with_probe_points(self.plan.probe_points.clone());
        Ok(plan)
    }

    pub fn initial_state(&self, dim: usize) -> Result<StateVector> {
        let raw = self
            .initial
            .as_ref()
            .ok_or_else(|| anyhow!("config key `initial`: required for this command"))?;
        if raw.len() != dim {
            bail!(
                "config key `initial`: has {} components, model needs {dim}",
                raw.len()
            );
        }
        Ok(StateVector::new(raw.clone())?)
    }
}

fn resolve(base_dir: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}
