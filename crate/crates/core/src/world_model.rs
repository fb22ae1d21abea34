//! Latent world model and coarse occupancy grids.
//!
//! `rollout(z, traj)` predicts a future scene latent for one candidate; the
//! decoder turns a latent into per-cell occupancy probabilities at the end
//! of the horizon. Two extra linear heads read the current scene features
//! and predict the current full grid and agent-only grid.

use serde::{Deserialize, Serialize};

use crate::error::{contract, parameter, Result};
use crate::model::trajectory_features;
use crate::nn::{sigmoid, Mlp, MlpCache};
use crate::scene::geometry::{rotate, Obb};
use crate::scene::Scene;
use crate::traj::Trajectory;

/// Ego-frame window: `x` from `x_min` forward, `y` centered on the ego.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub size: usize,
    pub cell: f64,
    pub x_min: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { size: 16, cell: 4.0, x_min: -8.0 }
    }
}

impl GridSpec {
    pub fn cells(&self) -> usize {
        self.size * self.size
    }

    /// Ego-frame center of cell `(row, col)`; rows advance along `x`,
    /// columns along `y`.
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        let half = self.size as f64 * self.cell / 2.0;
        [
            self.x_min + (row as f64 + 0.5) * self.cell,
            -half + (col as f64 + 0.5) * self.cell,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    pub size: usize,
    /// Row-major, one entry per cell, each 0 or 1.
    pub cells: Vec<u8>,
}

impl OccupancyGrid {
    pub fn empty(size: usize) -> Self {
        Self { size, cells: vec![0; size * size] }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.size + col]
    }

    pub fn as_targets(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| c as f64).collect()
    }

    /// One hex string per row, bits packed most significant first.
    pub fn to_packed_rows(&self) -> Vec<String> {
        self.cells
            .chunks(self.size)
            .map(|row| {
                let mut bytes = vec![0u8; self.size.div_ceil(8)];
                for (i, &c) in row.iter().enumerate() {
                    if c != 0 {
                        bytes[i / 8] |= 0x80 >> (i % 8);
                    }
                }
                hex::encode(bytes)
            })
            .collect()
    }

    pub fn from_packed_rows(rows: &[String]) -> Result<Self> {
        let size = rows.len();
        let mut cells = Vec::with_capacity(size * size);
        for r in rows {
            let bytes = hex::decode(r).map_err(|e| crate::Error::Format(format!("bad grid row: {e}")))?;
            if bytes.len() != size.div_ceil(8) {
                return Err(crate::Error::Format("grid row width does not match row count".into()));
            }
            cells.extend((0..size).map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1));
        }
        Ok(Self { size, cells })
    }
}

impl Serialize for OccupancyGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_packed_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for OccupancyGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<String>::deserialize(d)?;
        Self::from_packed_rows(&rows).map_err(serde::de::Error::custom)
    }
}

fn cell_box(spec: &GridSpec, row: usize, col: usize, ego: &crate::scene::EgoState) -> Obb {
    let c = spec.cell_center(row, col);
    let w = rotate(c, ego.heading);
    Obb {
        center: [ego.position[0] + w[0], ego.position[1] + w[1]],
        heading: ego.heading,
        half_length: spec.cell / 2.0,
        half_width: spec.cell / 2.0,
    }
}

/// Rasterizes the scene at waypoint step `step` (time `step * dt`) in the
/// current ego frame. A cell is set when an agent footprint overlaps it or,
/// if `with_corridor`, when its center lies outside the corridor.
pub fn rasterize(scene: &Scene, step: usize, spec: &GridSpec, with_corridor: bool) -> Result<OccupancyGrid> {
    if step > scene.horizon() {
        return Err(parameter(format!("step {step} beyond horizon {}", scene.horizon())));
    }
    let t = step as f64 * scene.expert.dt;
    let footprints: Vec<Obb> = scene.agents.iter().map(|a| a.footprint_at(t)).collect();
    let mut grid = OccupancyGrid::empty(spec.size);
    for row in 0..spec.size {
        for col in 0..spec.size {
            let cb = cell_box(spec, row, col, &scene.ego);
            let occupied = footprints.iter().any(|f| f.overlaps(&cb))
                || (with_corridor && !scene.corridor.contains(cb.center));
            grid.cells[row * spec.size + col] = occupied as u8;
        }
    }
    Ok(grid)
}

/// Agent footprints plus off-corridor cells.
pub fn ground_truth_grid(scene: &Scene, step: usize, spec: &GridSpec) -> Result<OccupancyGrid> {
    rasterize(scene, step, spec, true)
}

pub fn agent_grid(scene: &Scene, step: usize, spec: &GridSpec) -> Result<OccupancyGrid> {
    rasterize(scene, step, spec, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub waypoints: usize,
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub position_scale: f64,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub config: WorldConfig,
    pub rollout: Mlp,
    pub decoder: Mlp,
    pub bev_head: Mlp,
    pub agent_head: Mlp,
}

#[derive(Debug, Clone)]
pub struct RolloutPass {
    pub rows: usize,
    /// `rows x latent_dim`
    pub latent: Vec<f64>,
    cache: MlpCache,
}

impl WorldModel {
    pub fn new(config: WorldConfig, seed: u64) -> Self {
        let cells = config.grid.cells();
        Self {
            rollout: Mlp::new(&[config.feature_dim + 3 * config.waypoints, config.hidden, config.latent_dim], seed, false),
            decoder: Mlp::new(&[config.latent_dim, cells], seed.wrapping_add(1), false),
            bev_head: Mlp::new(&[config.feature_dim, cells], seed.wrapping_add(2), false),
            agent_head: Mlp::new(&[config.feature_dim, cells], seed.wrapping_add(3), false),
            config,
        }
    }

    pub fn check(&self) -> Result<()> {
        for m in [&self.rollout, &self.decoder, &self.bev_head, &self.agent_head] {
            m.check()?;
        }
        Ok(())
    }

    fn rollout_input(&self, z: &[f64], trajs: &[Trajectory]) -> Result<Vec<f64>> {
        if z.len() != self.config.feature_dim {
            return Err(contract("scene feature length mismatch"));
        }
        let mut x = Vec::with_capacity(trajs.len() * self.rollout.input_dim());
        for t in trajs {
            if t.len() != self.config.waypoints {
                return Err(contract("rollout trajectory has the wrong length"));
            }
            x.extend_from_slice(z);
            x.extend(trajectory_features(t, self.config.position_scale));
        }
        Ok(x)
    }

    pub fn rollout_forward(&self, z: &[f64], trajs: &[Trajectory]) -> Result<RolloutPass> {
        let x = self.rollout_input(z, trajs)?;
        let (latent, cache) = self.rollout.forward_cached(&x, trajs.len())?;
        Ok(RolloutPass { rows: trajs.len(), latent, cache })
    }

    pub fn rollout_backward(&self, pass: &RolloutPass, grad_latent: &[f64], grad: &mut [f64]) {
        self.rollout.backward(&pass.cache, grad_latent, grad);
    }

    /// Latent for one candidate.
    pub fn rollout(&self, z: &[f64], traj: &Trajectory) -> Result<Vec<f64>> {
        Ok(self.rollout_forward(z, std::slice::from_ref(traj))?.latent)
    }

    /// One latent per candidate.
    pub fn rollout_all(&self, z: &[f64], trajs: &[Trajectory]) -> Result<Vec<Vec<f64>>> {
        let pass = self.rollout_forward(z, trajs)?;
        Ok(pass.latent.chunks_exact(self.config.latent_dim).map(<[f64]>::to_vec).collect())
    }

    pub fn decode_grid(&self, latent: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decoder.forward(latent, 1)?.into_iter().map(sigmoid).collect())
    }
}
