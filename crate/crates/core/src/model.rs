//! Conditional refinement network and candidate scorer.
//!
//! The refiner maps `concat(p_t / position_scale, z, embed(t))` through two
//! SiLU layers to `2n` offsets (times `delta_scale`, in meters) and `n`
//! heading logits squashed by `pi * tanh`. The scorer is a separate MLP over
//! `concat(candidate features, z, z_rollout)` producing six logits per
//! candidate: imitation (softmax over the whole candidate set) and
//! NC, DAC, EP, TTC, Comf (independent sigmoids).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diffusion::{Denoiser, Refinement};
use crate::error::{contract, Result};
use crate::nn::{sigmoid, softmax, timestep_embedding, Mlp, MlpCache, TIME_EMBED_DIM};
use crate::traj::{PositionSequence, Trajectory};

pub const SCORE_HEADS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub waypoints: usize,
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    /// Meters per unit of network position input.
    pub position_scale: f64,
    /// Meters per unit of raw offset output.
    pub delta_scale: f64,
}

impl DenoiserConfig {
    pub fn refiner_sizes(&self) -> Vec<usize> {
        let n = self.waypoints;
        vec![2 * n + self.feature_dim + TIME_EMBED_DIM, self.hidden, self.hidden, 3 * n]
    }

    pub fn scorer_sizes(&self) -> Vec<usize> {
        vec![3 * self.waypoints + self.feature_dim + self.latent_dim, self.hidden, self.hidden, SCORE_HEADS]
    }
}

/// Per-candidate scores; `im` is a probability over the candidate set, the
/// rest are independent probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub im: f64,
    pub nc: f64,
    pub dac: f64,
    pub ep: f64,
    pub ttc: f64,
    pub comf: f64,
}

impl ScoreVector {
    pub fn from_array(s: [f64; SCORE_HEADS]) -> Self {
        Self { im: s[0], nc: s[1], dac: s[2], ep: s[3], ttc: s[4], comf: s[5] }
    }

    pub fn as_array(&self) -> [f64; SCORE_HEADS] {
        [self.im, self.nc, self.dac, self.ep, self.ttc, self.comf]
    }
}

/// `(x, y) / scale` and heading for every waypoint, flattened.
pub fn trajectory_features(traj: &Trajectory, position_scale: f64) -> Vec<f64> {
    traj.points
        .iter()
        .flat_map(|w| [w.x / position_scale, w.y / position_scale, w.psi])
        .collect()
}

/// Output of a batched refiner pass.
#[derive(Debug, Clone)]
pub struct RefinerPass {
    pub rows: usize,
    /// Offsets in meters, `rows x 2n`.
    pub delta: Vec<f64>,
    /// Headings in radians, `rows x n`.
    pub heading: Vec<f64>,
    cache: MlpCache,
    raw: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScorerPass {
    pub rows: usize,
    /// `rows x 6`
    pub logits: Vec<f64>,
    cache: MlpCache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserWeights {
    pub config: DenoiserConfig,
    pub refiner: Mlp,
    pub scorer: Mlp,
}

impl DenoiserWeights {
    /// Random trunks; the refiner's output layer starts at zero so an
    /// untrained refiner leaves anchors in place.
    pub fn new(config: DenoiserConfig, seed: u64) -> Self {
        let refiner = Mlp::new(&config.refiner_sizes(), seed, true);
        let scorer = Mlp::new(&config.scorer_sizes(), seed.wrapping_add(1), false);
        Self { config, refiner, scorer }
    }

    pub fn check(&self) -> Result<()> {
        self.refiner.check()?;
        self.scorer.check()?;
        if self.refiner.sizes != self.config.refiner_sizes() || self.scorer.sizes != self.config.scorer_sizes() {
            return Err(contract("denoiser layer sizes disagree with its config"));
        }
        Ok(())
    }

    fn check_state(&self, p: &PositionSequence, z: &[f64]) -> Result<()> {
        if p.len() != self.config.waypoints || z.len() != self.config.feature_dim {
            return Err(contract(format!(
                "refiner expects {} waypoints and {} features, got {} and {}",
                self.config.waypoints,
                self.config.feature_dim,
                p.len(),
                z.len()
            )));
        }
        Ok(())
    }

    /// Batched refiner forward pass over states sharing `z` and `t`.
    pub fn refine_forward(&self, states: &[PositionSequence], z: &[f64], t: usize) -> Result<RefinerPass> {
        let n = self.config.waypoints;
        let emb = timestep_embedding(t);
        let mut x = Vec::with_capacity(states.len() * self.refiner.input_dim());
        for s in states {
            self.check_state(s, z)?;
            x.extend(s.points.iter().flat_map(|p| [p[0] / self.config.position_scale, p[1] / self.config.position_scale]));
            x.extend_from_slice(z);
            x.extend_from_slice(&emb);
        }
        let rows = states.len();
        let (raw, cache) = self.refiner.forward_cached(&x, rows)?;
        let mut delta = Vec::with_capacity(rows * 2 * n);
        let mut heading = Vec::with_capacity(rows * n);
        for r in raw.chunks_exact(3 * n) {
            delta.extend(r[..2 * n].iter().map(|v| v * self.config.delta_scale));
            heading.extend(r[2 * n..].iter().map(|v| PI * bounded_tanh(*v)));
        }
        Ok(RefinerPass { rows, delta, heading, cache, raw })
    }

    /// Backpropagates offset and heading gradients; returns the gradient
    /// with respect to the state positions (meters), `rows x 2n`.
    pub fn refine_backward(
        &self,
        pass: &RefinerPass,
        grad_delta: &[f64],
        grad_heading: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let n = self.config.waypoints;
        let mut g_raw = vec![0.0; pass.raw.len()];
        for r in 0..pass.rows {
            for j in 0..2 * n {
                g_raw[r * 3 * n + j] = grad_delta[r * 2 * n + j] * self.config.delta_scale;
            }
            for j in 0..n {
                let th = bounded_tanh(pass.raw[r * 3 * n + 2 * n + j]);
                g_raw[r * 3 * n + 2 * n + j] = grad_heading[r * n + j] * PI * (1.0 - th * th);
            }
        }
        let gx = self.refiner.backward(&pass.cache, &g_raw, grad);
        let width = self.refiner.input_dim();
        let mut out = Vec::with_capacity(pass.rows * 2 * n);
        for r in 0..pass.rows {
            out.extend(gx[r * width..r * width + 2 * n].iter().map(|g| g / self.config.position_scale));
        }
        out
    }

    pub fn predict_refinement(&self, p_t: &PositionSequence, z: &[f64], t: usize) -> Result<Vec<[f64; 2]>> {
        let pass = self.refine_forward(std::slice::from_ref(p_t), z, t)?;
        Ok(pass.delta.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn predict_heading(&self, p_t: &PositionSequence, z: &[f64], t: usize) -> Result<Vec<f64>> {
        Ok(self.refine_forward(std::slice::from_ref(p_t), z, t)?.heading)
    }

    /// Batched scorer pass; `rollouts[i]` is the world-model latent of
    /// candidate `i`.
    pub fn score_forward(&self, candidates: &[Trajectory], z: &[f64], rollouts: &[Vec<f64>]) -> Result<ScorerPass> {
        if candidates.len() != rollouts.len() {
            return Err(contract("one rollout latent per candidate is required"));
        }
        if z.len() != self.config.feature_dim {
            return Err(contract("scene feature length mismatch"));
        }
        let mut x = Vec::with_capacity(candidates.len() * self.scorer.input_dim());
        for (c, zr) in candidates.iter().zip(rollouts) {
            if c.len() != self.config.waypoints || zr.len() != self.config.latent_dim {
                return Err(contract("candidate or rollout latent has the wrong length"));
            }
            x.extend(trajectory_features(c, self.config.position_scale));
            x.extend_from_slice(z);
            x.extend_from_slice(zr);
        }
        let rows = candidates.len();
        let (logits, cache) = self.scorer.forward_cached(&x, rows)?;
        Ok(ScorerPass { rows, logits, cache })
    }

    /// Returns the gradient with respect to each candidate's rollout latent.
    pub fn score_backward(&self, pass: &ScorerPass, grad_logits: &[f64], grad: &mut [f64]) -> Vec<Vec<f64>> {
        let gx = self.scorer.backward(&pass.cache, grad_logits, grad);
        let width = self.scorer.input_dim();
        let start = 3 * self.config.waypoints + self.config.feature_dim;
        (0..pass.rows)
            .map(|r| gx[r * width + start..(r + 1) * width].to_vec())
            .collect()
    }

    /// Scores for a whole candidate set.
    pub fn predict_scores(&self, candidates: &[Trajectory], z: &[f64], rollouts: &[Vec<f64>]) -> Result<Vec<ScoreVector>> {
        let pass = self.score_forward(candidates, z, rollouts)?;
        Ok(scores_from_logits(&pass.logits))
    }
}

/// `tanh` kept strictly inside `(-1, 1)` so saturated headings never hit `pi`.
fn bounded_tanh(x: f64) -> f64 {
    x.tanh().clamp(-1.0 + f64::EPSILON, 1.0 - f64::EPSILON)
}

/// Softmax over the first column, sigmoid on the rest.
pub fn scores_from_logits(logits: &[f64]) -> Vec<ScoreVector> {
    let im_logits: Vec<f64> = logits.chunks_exact(SCORE_HEADS).map(|r| r[0]).collect();
    let im = softmax(&im_logits);
    logits
        .chunks_exact(SCORE_HEADS)
        .zip(im)
        .map(|(r, p)| {
            let mut s = [p, 0.0, 0.0, 0.0, 0.0, 0.0];
            for k in 1..SCORE_HEADS {
                s[k] = sigmoid(r[k]);
            }
            ScoreVector::from_array(s)
        })
        .collect()
}

impl Denoiser for DenoiserWeights {
    fn refine(&self, p_t: &PositionSequence, z: &[f64], t: usize) -> Result<Refinement> {
        let pass = self.refine_forward(std::slice::from_ref(p_t), z, t)?;
        Ok(Refinement {
            delta: pass.delta.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
            heading: pass.heading,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::Waypoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config() -> DenoiserConfig {
        DenoiserConfig { waypoints: 8, feature_dim: 32, latent_dim: 32, hidden: 16, position_scale: 10.0, delta_scale: 2.0 }
    }

    fn state(rng: &mut ChaCha8Rng) -> PositionSequence {
        PositionSequence { points: (1..=8).map(|i| [5.0 * i as f64 + rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)]).collect() }
    }

    #[test]
    fn fresh_refiner_is_zero() {
        let w = DenoiserWeights::new(config(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = w.predict_refinement(&state(&mut rng), &z, 8).unwrap();
        assert!(d.iter().all(|p| p == &[0.0, 0.0]));
        assert!(w.predict_refinement(&PositionSequence::zeros(7), &z, 8).is_err());
        assert!(w.check().is_ok());
    }

    #[test]
    fn headings_stay_inside_pi() {
        let mut w = DenoiserWeights::new(config(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in &mut w.refiner.params {
            *p = rng.random_range(-3.0..3.0);
        }
        for _ in 0..200 {
            let z: Vec<f64> = (0..32).map(|_| rng.random_range(-5.0..5.0)).collect();
            for h in w.predict_heading(&state(&mut rng), &z, 4).unwrap() {
                assert!(h > -PI && h < PI);
            }
        }
    }

    #[test]
    fn identical_candidates_split_imitation_mass() {
        let w = DenoiserWeights::new(config(), 3);
        let t = Trajectory::new((1..=8).map(|i| Waypoint::new(i as f64, 0.0, 0.0)).collect(), 0.5).unwrap();
        let s = w.predict_scores(&[t.clone(), t], &[0.1; 32], &[vec![0.0; 32], vec![0.0; 32]]).unwrap();
        assert!((s[0].im - 0.5).abs() < 1e-15 && (s[1].im - 0.5).abs() < 1e-15);
        for v in &s {
            assert!(v.as_array()[1..].iter().all(|p| *p > 0.0 && *p < 1.0));
        }
    }
}
