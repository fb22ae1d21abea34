//! A trained planner: refiner, scorer and world model with their configs,
//! and the checkpoint file that stores it.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, RefinerKind, RunConfig};
use crate::diffusion::{denoise_anchor, NoiseSchedule};
use crate::error::{Error, Result};
use crate::hatna::HatnaConfig;
use crate::io::{read_json, write_json};
use crate::model::{DenoiserConfig, DenoiserWeights, ScoreVector};
use crate::scene::{Scene, FEATURE_DIM};
use crate::traj::{PositionSequence, Trajectory, Waypoint};
use crate::world_model::{WorldConfig, WorldModel};

pub const CHECKPOINT_FORMAT: &str = "cddrive-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planner {
    pub config: ModelConfig,
    pub schedule: NoiseSchedule,
    pub hatna: HatnaConfig,
    pub denoiser: DenoiserWeights,
    pub world: WorldModel,
}

impl Planner {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        let denoiser = DenoiserWeights::new(
            DenoiserConfig {
                waypoints: config.waypoints,
                feature_dim: FEATURE_DIM,
                latent_dim: config.latent_dim,
                hidden: config.hidden,
                position_scale: config.position_scale,
                delta_scale: config.delta_scale,
            },
            seed,
        );
        let world = WorldModel::new(
            WorldConfig {
                waypoints: config.waypoints,
                feature_dim: FEATURE_DIM,
                latent_dim: config.latent_dim,
                hidden: config.world_hidden,
                position_scale: config.position_scale,
                grid: config.grid,
            },
            seed.wrapping_add(100),
        );
        Ok(Self {
            schedule: config.schedule.build()?,
            hatna: config.hatna.clone(),
            config: config.clone(),
            denoiser,
            world,
        })
    }

    pub fn check(&self) -> Result<()> {
        self.denoiser.check()?;
        self.world.check()?;
        if self.hatna.gain_log.iter().any(|g| !g.is_finite()) {
            return Err(crate::error::contract("HATNA gains are not finite"));
        }
        Ok(())
    }

    /// Draws the forward-process noise for one anchor, in meters, after
    /// HATNA when enabled.
    pub fn sample_noise(&self, rng: &mut ChaCha8Rng) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let n = self.config.waypoints;
        let raw: Vec<[f64; 2]> = (0..n)
            .map(|_| [StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)])
            .collect();
        let shaped = if self.config.use_hatna { self.hatna.adapt(&raw) } else { raw.clone() };
        let s = self.config.noise_scale;
        (raw, shaped.into_iter().map(|p| [p[0] * s, p[1] * s]).collect())
    }

    /// Refines every anchor. Noise is drawn from `rng` in anchor order.
    pub fn refine_anchors(&self, z: &[f64], anchors: &[Trajectory], rng: &mut ChaCha8Rng) -> Result<Vec<Trajectory>> {
        match self.config.refiner {
            RefinerKind::Diffusion => anchors
                .iter()
                .map(|a| {
                    let (_, eps) = self.sample_noise(rng);
                    let (pos, heading) = denoise_anchor(&self.schedule, &self.denoiser, z, &a.positions(), &eps)?;
                    assemble(&pos, &heading, a.dt)
                })
                .collect(),
            RefinerKind::Regression => {
                let states: Vec<PositionSequence> = anchors.iter().map(Trajectory::positions).collect();
                let pass = self.denoiser.refine_forward(&states, z, 0)?;
                let n = self.config.waypoints;
                states
                    .iter()
                    .enumerate()
                    .map(|(r, s)| {
                        let pos = offset(s, &pass.delta[r * 2 * n..(r + 1) * 2 * n]);
                        assemble(&pos, &pass.heading[r * n..(r + 1) * n], anchors[r].dt)
                    })
                    .collect()
            }
        }
    }

    /// Scores a full candidate set through the world model and scorer.
    pub fn score(&self, z: &[f64], candidates: &[Trajectory]) -> Result<Vec<ScoreVector>> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let rollouts = self.world.rollout_all(z, candidates)?;
        self.denoiser.predict_scores(candidates, z, &rollouts)
    }
}

pub(crate) fn offset(anchor: &PositionSequence, delta: &[f64]) -> PositionSequence {
    PositionSequence {
        points: anchor
            .points
            .iter()
            .zip(delta.chunks_exact(2))
            .map(|(a, d)| [a[0] + d[0], a[1] + d[1]])
            .collect(),
    }
}

pub(crate) fn assemble(pos: &PositionSequence, heading: &[f64], dt: f64) -> Result<Trajectory> {
    let pts = pos.points.iter().zip(heading).map(|(p, h)| Waypoint::new(p[0], p[1], *h)).collect();
    Trajectory::new(pts, dt)
}

/// Per-scene noise stream for evaluation, independent of scene order.
pub fn scene_rng(seed: u64, scene: &Scene) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ scene.rng_seed.wrapping_mul(0xA076_1D64_78BD_642F) ^ scene.difficulty as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: RunConfig,
    pub steps_trained: usize,
    pub planner: Planner,
}

impl Checkpoint {
    pub fn new(config: RunConfig, steps_trained: usize, planner: Planner) -> Result<Self> {
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash: config.hash()?,
            config,
            steps_trained,
            planner,
        })
    }

    /// Written atomically.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Self = read_json(path.as_ref())?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint {} v{}", c.format, c.version)));
        }
        if c.config.hash()? != c.config_hash {
            return Err(Error::Format("checkpoint config hash does not match its config".into()));
        }
        c.planner.check()?;
        Ok(c)
    }
}
