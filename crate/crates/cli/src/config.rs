//! Experiment configuration. JSON, unknown keys rejected.

use std::path::{Path, PathBuf};

use gcnn_core::learn::{Task, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub shapes: Vec<ShapeEntry>,
    /// Shape whose vertices index the correspondence classes.
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub task: TaskName,
    /// Defaults to every shape not listed for validation.
    #[serde(default)]
    pub train_shapes: Option<Vec<String>>,
    #[serde(default)]
    pub validation_shapes: Vec<String>,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub charts: ChartConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeEntry {
    pub name: String,
    pub mesh: PathBuf,
    /// One reference vertex index per line.
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    #[serde(default)]
    pub label: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    #[default]
    Descriptor,
    Correspondence,
    Retrieval,
}

impl From<TaskName> for Task {
    fn from(t: TaskName) -> Self {
        match t {
            TaskName::Descriptor => Task::Descriptor,
            TaskName::Correspondence => Task::Correspondence,
            TaskName::Retrieval => Task::Retrieval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    /// Eigenpairs per shape, capped at the vertex count.
    pub k: usize,
    /// Geometry vector dimension.
    pub m: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { k: 300, m: 150 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChartConfig {
    /// Disc radius as a fraction of each shape's geodesic diameter.
    pub rho0_fraction: f64,
    pub n_rho: usize,
    pub n_theta: usize,
    /// Gaussian widths in units of one radial / angular bin.
    pub sigma_rho_bins: f64,
    pub sigma_theta_bins: f64,
    /// Fast-marching sources used to estimate the diameter.
    pub diameter_samples: usize,
}

impl Default for ChartConfig {
    fn default() -> Self {
        Self {
            rho0_fraction: 0.01,
            n_rho: 5,
            n_theta: 16,
            sigma_rho_bins: 1.0,
            sigma_theta_bins: 1.0,
            diameter_samples: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// One of gcnn1, gcnn2, gcnn3, retrieval. Ignored when `layers` is set.
    #[serde(default)]
    pub preset: Option<String>,
    /// Explicit chain; an empty list is the identity model.
    #[serde(default)]
    pub layers: Option<Vec<LayerConfig>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            preset: Some("gcnn1".into()),
            layers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerConfig {
    /// Without `width` the layer maps to one output per reference vertex.
    Lin {
        #[serde(default)]
        width: Option<usize>,
        #[serde(default)]
        bias: bool,
    },
    Relu,
    Gc {
        width: usize,
    },
    Amp,
    /// Keeps all non-redundant frequencies unless `kept` is given.
    Ftm {
        #[serde(default)]
        kept: Option<usize>,
    },
    Cov,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub gamma: f64,
    pub margin: f64,
    pub max_updates: usize,
    pub pairs_per_batch: usize,
    pub vertices_per_batch: usize,
    pub shape_pairs_per_batch: usize,
    pub decay: f64,
    pub epsilon: f64,
    pub validate_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            gamma: d.gamma,
            margin: d.margin,
            max_updates: d.max_updates,
            pairs_per_batch: d.pairs_per_batch,
            vertices_per_batch: d.vertices_per_batch,
            shape_pairs_per_batch: d.shape_pairs_per_batch,
            decay: d.decay,
            epsilon: d.epsilon,
            validate_every: d.validate_every,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            margin: self.margin,
            max_updates: self.max_updates,
            pairs_per_batch: self.pairs_per_batch,
            vertices_per_batch: self.vertices_per_batch,
            shape_pairs_per_batch: self.shape_pairs_per_batch,
            seed,
            decay: self.decay,
            epsilon: self.epsilon,
            validate_every: self.validate_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Largest CMC rank; defaults to the reference size.
    pub k_max: Option<usize>,
    /// Largest Princeton radius, in units of the reference diameter.
    pub r_max: f64,
    pub princeton_steps: usize,
    pub pr_levels: usize,
    /// Random non-matching references drawn per query for ROC negatives.
    pub roc_negatives: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            k_max: None,
            r_max: 0.25,
            princeton_steps: 100,
            pr_levels: 10,
            roc_negatives: 10,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates; relative paths are resolved against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for s in &mut self.shapes {
            fix(&mut s.mesh);
            if let Some(g) = s.ground_truth.as_mut() {
                fix(g);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.shapes.is_empty() {
            return bad("no shapes listed".into());
        }
        for (i, s) in self.shapes.iter().enumerate() {
            let safe = !s.name.is_empty()
                && !s.name.starts_with('.')
                && s.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
            if !safe {
                return bad(format!("shape name {:?} must use only letters, digits, '-', '_' and '.'", s.name));
            }
            if self.shapes[..i].iter().any(|t| t.name == s.name) {
                return bad(format!("duplicate shape name {:?}", s.name));
            }
        }
        let known = |n: &String| self.shapes.iter().any(|s| &s.name == n);
        let listed = self.reference.iter().chain(self.validation_shapes.iter()).chain(self.train_shapes.iter().flatten());
        for n in listed {
            if !known(n) {
                return bad(format!("unknown shape {n:?}"));
            }
        }
        if self.spectral.m == 0 || self.spectral.k < 2 {
            return bad("spectral.k must be at least 2 and spectral.m positive".into());
        }
        let c = &self.charts;
        if !(c.rho0_fraction > 0.0) || c.n_rho == 0 || c.n_theta == 0 || !(c.sigma_rho_bins > 0.0) || !(c.sigma_theta_bins > 0.0) {
            return bad("chart radius, bin counts and widths must be positive".into());
        }
        if self.model.preset.is_none() && self.model.layers.is_none() {
            return bad("model needs a preset or a layer list".into());
        }
        if let Some(p) = &self.model.preset {
            if self.model.layers.is_none() && gcnn_core::net::Preset::from_name(p).is_none() {
                return bad(format!("unknown preset {p:?}"));
            }
        }
        self.train
            .to_train_config(self.seed)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn shape(&self, name: &str) -> Result<&ShapeEntry, CliError> {
        self.shapes
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| CliError::Usage(format!("unknown shape {name:?}")))
    }

    pub fn training_names(&self) -> Vec<String> {
        match &self.train_shapes {
            Some(t) => t.clone(),
            None => self
                .shapes
                .iter()
                .map(|s| s.name.clone())
                .filter(|n| !self.validation_shapes.contains(n))
                .collect(),
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.output_dir.join("cache")
    }
}
