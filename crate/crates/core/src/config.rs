//! Scenario files.
//!
//! A scenario is one JSON document. Relative paths inside it are resolved
//! against the directory of the file. The top-level `seed` drives the
//! barycenter solvers and is the default for the initial-measure preset and
//! the schedule generator when those carry no seed of their own.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusState, StopCriteria};
use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::{DiscreteMeasure, GaussianMeasure, Measure};
use crate::network::{generate_schedule, GraphSchedule, ScheduleKind};
use crate::transport::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dimension: usize,
    pub agents: usize,
    #[serde(default)]
    pub seed: u64,
    pub initial: InitialSpec,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub stop: StopCriteria,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    /// Run even when the schedule fails validation.
    #[serde(default)]
    pub force: bool,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKind {
    /// Means uniform in the box, covariances `Q diag(λ) Qᵀ` with a random
    /// rotation and eigenvalues uniform in `eigenvalue_range`.
    RandomGaussian,
    /// `atoms` uniformly weighted points uniform in the box.
    RandomDiscrete,
    /// One point per agent, uniform in the box.
    RandomDirac,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub kind: PresetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_box")]
    pub mean_range: [f64; 2],
    #[serde(default = "default_eigs")]
    pub eigenvalue_range: [f64; 2],
    #[serde(default = "default_atoms")]
    pub atoms: usize,
}

fn default_box() -> [f64; 2] {
    [-1.0, 1.0]
}

fn default_eigs() -> [f64; 2] {
    [0.5, 2.0]
}

fn default_atoms() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Preset(Preset),
    Measures(Vec<Measure>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: ScheduleKind,
    #[serde(rename = "L")]
    pub l: usize,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSchedule {
    pub weights: Vec<Vec<f64>>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Generator(GeneratorConfig),
    /// A schedule JSON file (dense rounds or a generator descriptor).
    File(PathBuf),
    /// The same matrix every round, unit windows.
    Fixed(FixedSchedule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub trace: String,
    /// Write a checkpoint every this many rounds (0 disables). The final
    /// state is always written when checkpoints are enabled.
    pub checkpoint_interval: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            trace: "trace.csv".into(),
            checkpoint_interval: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub k_max: usize,
    pub strict_symmetry: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            k_max: 10,
            strict_symmetry: false,
        }
    }
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub max_rounds: Option<usize>,
    pub threshold: Option<f64>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

impl ScenarioConfig {
    /// Parses and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_error(path, "", e.to_string()))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config { field, message, .. } => config_error(path, &field, message),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate().map_err(|e| match e {
            Error::Config { field, message, .. } => config_error(path, &field, message),
            other => other,
        })?;
        Ok(cfg)
    }

    /// Parses without validating; relative paths resolve against the working
    /// directory.
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            config_error(Path::new(""), if field == "." { "" } else { &field }, e.inner().to_string())
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = dir.into();
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn trace_path(&self) -> PathBuf {
        self.output_dir().join(&self.output.trace)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.max_rounds {
            self.stop.max_rounds = m;
        }
        if let Some(t) = o.threshold {
            self.stop.diameter_threshold = t;
        }
        if let Some(out) = &o.out {
            self.output.dir = std::path::absolute(out)?;
        }
        self.force |= o.force;
        self.validate()
    }

    /// Checks the sections against each other. Errors name the field.
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str, m: String| Err(config_error(Path::new(""), f, m));
        if self.dimension < 1 {
            return field("dimension", "must be at least 1".into());
        }
        if self.agents < 2 {
            return field("agents", "consensus needs at least 2 agents".into());
        }
        match &self.initial {
            InitialSpec::Preset(p) => {
                if !(p.mean_range[0] <= p.mean_range[1]) || p.mean_range.iter().any(|v| !v.is_finite()) {
                    return field("initial.preset.mean_range", "expected [lo, hi] with lo <= hi".into());
                }
                let [lo, hi] = p.eigenvalue_range;
                if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                    return field("initial.preset.eigenvalue_range", "expected 0 < lo <= hi".into());
                }
                if p.atoms < 1 {
                    return field("initial.preset.atoms", "must be at least 1".into());
                }
            }
            InitialSpec::Measures(ms) => {
                if ms.len() != self.agents {
                    return field("initial.measures", format!("{} measures for {} agents", ms.len(), self.agents));
                }
                if let Some(k) = ms.iter().position(|m| m.dim() != self.dimension) {
                    return field(
                        &format!("initial.measures[{k}]"),
                        format!("dimension {} differs from {}", ms[k].dim(), self.dimension),
                    );
                }
                if let Some(k) = ms.iter().position(|m| m.kind() != ms[0].kind()) {
                    return field(&format!("initial.measures[{k}]"), "gaussian and discrete agents cannot be mixed".into());
                }
            }
        }
        match &self.schedule {
            ScheduleSpec::Generator(g) => {
                if g.l < 1 {
                    return field("schedule.generator.L", "must be at least 1".into());
                }
                if !(g.delta > 0.0 && g.delta < 1.0) {
                    return field("schedule.generator.delta", "must lie in (0, 1)".into());
                }
            }
            ScheduleSpec::File(p) => {
                if !self.resolve(p).is_file() {
                    return field("schedule.file", format!("{} does not exist", self.resolve(p).display()));
                }
            }
            ScheduleSpec::Fixed(f) => {
                if f.weights.len() != self.agents || f.weights.iter().any(|r| r.len() != self.agents) {
                    return field("schedule.fixed.weights", format!("expected a {0}x{0} matrix", self.agents));
                }
            }
        }
        if let Err(e) = self.solver.validate() {
            return field("solver", e.to_string());
        }
        if let Err(e) = self.stop.validate() {
            return field("stop", e.to_string());
        }
        if self.output.trace.is_empty() {
            return field("output.trace", "file name must not be empty".into());
        }
        Ok(())
    }

    pub fn build_initial(&self) -> Result<ConsensusState> {
        let agents = match &self.initial {
            InitialSpec::Measures(ms) => ms.clone(),
            InitialSpec::Preset(p) => preset_agents(p, self.agents, self.dimension, p.seed.unwrap_or(self.seed))?,
        };
        ConsensusState::new(agents)
    }

    /// The schedule, covering at least `stop.max_rounds` rounds when it is
    /// generated or fixed.
    pub fn build_schedule(&self) -> Result<GraphSchedule> {
        let horizon = self.stop.max_rounds;
        let s = match &self.schedule {
            ScheduleSpec::Generator(g) => {
                generate_schedule(g.kind, self.agents, g.l, g.delta, g.seed.unwrap_or(self.seed), horizon)?
            }
            ScheduleSpec::Fixed(f) => {
                let n = self.agents;
                GraphSchedule::fixed(DMatrix::from_fn(n, n, |i, j| f.weights[i][j]), horizon, f.delta)?
            }
            ScheduleSpec::File(p) => {
                let path = self.resolve(p);
                let text = fs::read_to_string(&path)?;
                let s: GraphSchedule = serde_json::from_str(&text)
                    .map_err(|e| config_error(&path, "", e.to_string()))?;
                s.extended(horizon).unwrap_or(s)
            }
        };
        if s.n() != self.agents {
            return Err(config_error(
                Path::new(""),
                "schedule",
                format!("schedule has {} agents, scenario has {}", s.n(), self.agents),
            ));
        }
        Ok(s)
    }
}

fn config_error(path: &Path, field: &str, message: String) -> Error {
    Error::Config {
        path: path.to_path_buf(),
        field: field.to_string(),
        message,
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, d: usize, range: [f64; 2]) -> Vec<f64> {
    (0..d)
        .map(|_| if range[0] == range[1] { range[0] } else { rng.random_range(range[0]..range[1]) })
        .collect()
}

/// Initial agents for a preset, deterministic in `seed`.
pub fn preset_agents(p: &Preset, n: usize, d: usize, seed: u64) -> Result<Vec<Measure>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| -> Result<Measure> {
            Ok(match p.kind {
                PresetKind::RandomGaussian => {
                    let z = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let q = z.qr().q();
                    let [lo, hi] = p.eigenvalue_range;
                    let eig = DVector::from_fn(d, |_, _| if lo == hi { lo } else { rng.random_range(lo..hi) });
                    let cov = linalg::symmetrize(&(&q * DMatrix::from_diagonal(&eig) * q.transpose()));
                    let mean = DVector::from_vec(uniform_point(&mut rng, d, p.mean_range));
                    GaussianMeasure::new(mean, cov)?.into()
                }
                PresetKind::RandomDiscrete => {
                    let atoms: Vec<f64> = (0..p.atoms).flat_map(|_| uniform_point(&mut rng, d, p.mean_range)).collect();
                    DiscreteMeasure::uniform(d, atoms)?.into()
                }
                PresetKind::RandomDirac => DiscreteMeasure::dirac(&uniform_point(&mut rng, d, p.mean_range))?.into(),
            })
        })
        .collect()
}
