//! JSON experiment configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use verspace::sampler::ChainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ImageLinear,
    ImageRrf,
    GaussianLinear,
    EquicorrTheory,
    WorstCase,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::ImageLinear => "image_linear",
            Task::ImageRrf => "image_rrf",
            Task::GaussianLinear => "gaussian_linear",
            Task::EquicorrTheory => "equicorr_theory",
            Task::WorstCase => "worst_case",
        }
    }
}

/// Sampler length and chain count. `n_samples` is the total `M` over all chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSettings {
    pub n_samples: usize,
    pub warmup: usize,
    pub thinning: usize,
    pub chains: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            warmup: 1_000,
            thinning: 10,
            chains: 4,
        }
    }
}

impl ChainSettings {
    pub fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            n_samples: self.n_samples,
            warmup: self.warmup,
            thinning: self.thinning,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Mnist,
    FashionMnist,
    /// Explicit IDX paths given in `files`.
    Files,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageSettings {
    pub dataset: Dataset,
    pub files: Option<IdxFiles>,
    /// Source class mapped to label +1; defaults per dataset.
    pub class_pos: Option<u8>,
    pub class_neg: Option<u8>,
    pub n: usize,
    pub m: usize,
    pub standardize: bool,
}

impl Default for ImageSettings {
    fn default() -> Self {
        Self {
            dataset: Dataset::Mnist,
            files: None,
            class_pos: None,
            class_neg: None,
            n: 350,
            m: 5000,
            standardize: true,
        }
    }
}

impl ImageSettings {
    /// MNIST 0 vs 1 and Fashion-MNIST shirt (6) vs trouser (1) by default.
    pub fn classes(&self) -> Result<(u8, u8), CliError> {
        let defaults = match self.dataset {
            Dataset::Mnist => Some((0, 1)),
            Dataset::FashionMnist => Some((6, 1)),
            Dataset::Files => None,
        };
        match (self.class_pos, self.class_neg, defaults) {
            (Some(p), Some(q), _) => Ok((p, q)),
            (None, None, Some(d)) => Ok(d),
            _ => Err(CliError::Config(
                "class_pos and class_neg must both be given for this dataset".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RrfSettings {
    pub n_features: usize,
    /// Standardize the ReLU features with training-pool statistics.
    pub standardize_features: bool,
}

impl Default for RrfSettings {
    fn default() -> Self {
        Self {
            n_features: 1000,
            standardize_features: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianSettings {
    pub dim: usize,
    pub snr: f64,
    pub n: usize,
}

impl Default for GaussianSettings {
    fn default() -> Self {
        Self {
            dim: 100,
            snr: 2.0,
            n: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquicorrSettings {
    pub ns: Vec<usize>,
    pub rhos: Vec<f64>,
    /// Training-set size for the limit-CDF comparison.
    pub cdf_n: usize,
    pub cdf_draws: usize,
}

impl Default for EquicorrSettings {
    fn default() -> Self {
        Self {
            ns: vec![100, 1000, 10_000, 100_000],
            rhos: vec![0.3, 0.5, 0.8],
            cdf_n: 200,
            cdf_draws: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorstCaseSettings {
    pub ns: Vec<usize>,
    /// Defaults to `(d_eff − 1) − n`, `d_eff` the number of non-constant features.
    pub n_bad: Option<usize>,
    pub combo_size: usize,
    pub lr_scale: f64,
    pub max_iters: usize,
    pub min_train_accuracy: f64,
}

impl Default for WorstCaseSettings {
    fn default() -> Self {
        Self {
            ns: vec![100, 350, 700],
            n_bad: None,
            combo_size: 3,
            lr_scale: 1.0,
            max_iters: 100_000,
            min_train_accuracy: 0.99,
        }
    }
}

pub const DEFAULT_GRID_POINTS: usize = verspace::estimator::DEFAULT_GRID_POINTS;

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub chain: ChainSettings,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rrf: Option<RrfSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<GaussianSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equicorr: Option<EquicorrSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_case: Option<WorstCaseSettings>,
}

impl ExperimentConfig {
    /// Default configuration for `task` with every relevant block filled in.
    pub fn for_task(task: Task) -> Self {
        Self {
            task,
            seed: 0,
            chain: ChainSettings::default(),
            grid_points: DEFAULT_GRID_POINTS,
            image: None,
            rrf: None,
            gaussian: None,
            equicorr: None,
            worst_case: None,
        }
        .resolved()
    }

    /// Fills the settings blocks the task needs with defaults and drops the rest.
    pub fn resolved(mut self) -> Self {
        let needs_image = matches!(
            self.task,
            Task::ImageLinear | Task::ImageRrf | Task::WorstCase
        );
        self.image = needs_image.then(|| self.image.take().unwrap_or_default());
        self.rrf = (self.task == Task::ImageRrf).then(|| self.rrf.take().unwrap_or_default());
        self.gaussian =
            (self.task == Task::GaussianLinear).then(|| self.gaussian.take().unwrap_or_default());
        self.equicorr =
            (self.task == Task::EquicorrTheory).then(|| self.equicorr.take().unwrap_or_default());
        self.worst_case =
            (self.task == Task::WorstCase).then(|| self.worst_case.take().unwrap_or_default());
        self
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks that do not need data on disk.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let c = &self.chain;
        if c.n_samples == 0 || c.thinning == 0 || c.chains == 0 || c.chains > c.n_samples {
            return bad(format!(
                "chain settings need n_samples >= chains >= 1 and thinning >= 1, got {c:?}"
            ));
        }
        if self.grid_points < 2 {
            return bad("grid_points must be at least 2".into());
        }
        if let Some(img) = &self.image {
            img.classes()?;
            if img.dataset == Dataset::Files && img.files.is_none() {
                return bad("dataset \"files\" needs a `files` block".into());
            }
            if img.n == 0 || img.m == 0 {
                return bad("image n and m must be positive".into());
            }
        }
        if let Some(r) = &self.rrf {
            let n = self.image.as_ref().map_or(0, |i| i.n);
            if r.n_features == 0 || n >= r.n_features {
                return bad(format!(
                    "interpolation needs n < N, got n = {n}, N = {}",
                    r.n_features
                ));
            }
        }
        if let Some(g) = &self.gaussian {
            if g.dim == 0 || g.n == 0 || g.n >= g.dim || !(g.snr > 0.0 && g.snr.is_finite()) {
                return bad(format!(
                    "gaussian settings need 0 < n < dim and snr > 0, got {g:?}"
                ));
            }
        }
        if let Some(e) = &self.equicorr {
            if e.ns.iter().any(|&n| n < 2) || e.cdf_n == 0 || e.cdf_draws == 0 {
                return bad("equicorr sizes must be >= 2 and draw counts positive".into());
            }
            if e.rhos.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
                return bad("every rho must lie in (0, 1)".into());
            }
        }
        if let Some(w) = &self.worst_case {
            if w.ns.is_empty() || w.combo_size == 0 || !(w.lr_scale > 0.0) || w.max_iters == 0 {
                return bad(format!("invalid worst_case settings: {w:?}"));
            }
        }
        Ok(())
    }
}
