//! Versioned run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::NoiseSchedule;
use crate::error::{parameter, Error, Result};
use crate::hatna::HatnaConfig;
use crate::io::{read_json, write_json};
use crate::losses::{FocalParams, LossWeights};
use crate::scene::EvalConfig;
use crate::traj::DEFAULT_WAYPOINTS;
use crate::world_model::GridSpec;

pub const CONFIG_FORMAT: &str = "cddrive-run-config";
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RefinerKind {
    /// Truncated reverse diffusion from noised anchors.
    Diffusion,
    /// One forward pass from the clean anchor.
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub t_truncate: usize,
    pub ddim_stride: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { steps: 100, beta_start: 1e-4, beta_end: 0.05, t_truncate: 8, ddim_stride: 4 }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end, self.t_truncate, self.ddim_stride)
    }
}

/// Aggregation weights of the decision rule, in head order
/// `im, nc, dac, ep, ttc, comf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub im: f64,
    pub nc: f64,
    pub dac: f64,
    pub ep: f64,
    pub ttc: f64,
    pub comf: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { im: 0.05, nc: 0.5, dac: 0.5, ep: 1.0, ttc: 1.0, comf: 1.0 }
    }
}

impl ScoreWeights {
    pub fn as_array(&self) -> [f64; 6] {
        [self.im, self.nc, self.dac, self.ep, self.ttc, self.comf]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || w.iter().all(|v| *v == 0.0) {
            return Err(parameter("score weights must be nonnegative with at least one positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub waypoints: usize,
    pub hidden: usize,
    pub world_hidden: usize,
    pub latent_dim: usize,
    pub position_scale: f64,
    pub delta_scale: f64,
    /// Meters per unit of forward-process noise.
    pub noise_scale: f64,
    pub refiner: RefinerKind,
    pub use_hatna: bool,
    pub hatna: HatnaConfig,
    pub schedule: ScheduleConfig,
    pub grid: GridSpec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            waypoints: DEFAULT_WAYPOINTS,
            hidden: 128,
            world_hidden: 64,
            latent_dim: 32,
            position_scale: 10.0,
            delta_scale: 2.0,
            noise_scale: 1.0,
            refiner: RefinerKind::Diffusion,
            use_hatna: true,
            hatna: HatnaConfig::new(DEFAULT_WAYPOINTS),
            schedule: ScheduleConfig::default(),
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub warmup_steps: usize,
    /// Supervise every reverse stage, not only the last.
    pub deep_supervision: bool,
    pub loss_weights: LossWeights,
    pub focal: FocalParams,
    pub divergence_threshold: f64,
    /// Emit a loss record every this many steps.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 4,
            learning_rate: 1e-3,
            min_learning_rate: 1e-5,
            warmup_steps: 100,
            deep_supervision: true,
            loss_weights: LossWeights::default(),
            focal: FocalParams::default(),
            divergence_threshold: 1e6,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    /// Linear warmup to `learning_rate`, then cosine decay to
    /// `min_learning_rate` at the final step.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        self.min_learning_rate
            + 0.5 * (self.learning_rate - self.min_learning_rate) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub train_seed_start: u64,
    pub train_count: usize,
    pub interactive_fraction: f64,
    pub vocab_size: usize,
    pub vocab_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_seed_start: 0,
            train_count: 2000,
            interactive_fraction: 0.5,
            vocab_size: 256,
            vocab_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub score_weights: ScoreWeights,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            format: CONFIG_FORMAT.into(),
            version: CONFIG_VERSION,
            seed: 0,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            score_weights: ScoreWeights::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format != CONFIG_FORMAT || self.version != CONFIG_VERSION {
            return Err(Error::Format(format!("unsupported run config {} v{}", self.format, self.version)));
        }
        self.model.schedule.build()?;
        if self.model.use_hatna {
            self.model.hatna.validate()?;
        }
        if self.model.hatna.horizon() != self.model.waypoints {
            return Err(parameter("HATNA gains must have one entry per waypoint"));
        }
        if self.train.batch_size == 0 || self.train.steps == 0 {
            return Err(parameter("training needs positive steps and batch size"));
        }
        if !(0.0..=1.0).contains(&self.data.interactive_fraction) {
            return Err(parameter("interactive fraction must lie in [0, 1]"));
        }
        self.train.loss_weights.validate()?;
        self.score_weights.validate()
    }

    /// Lowercase hex SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Self = read_json(path.as_ref())?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}
