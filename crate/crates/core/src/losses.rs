//! Training objectives and their gradients.

use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};
use crate::nn::{sigmoid, softmax};
use crate::traj::{angle_diff, l2_distance, Trajectory};

const CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub traj: f64,
    pub im: f64,
    pub sim: f64,
    pub lwm: f64,
    pub bev: f64,
    pub agent: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { traj: 4.0, im: 0.01, sim: 0.1, lwm: 0.1, bev: 10.0, agent: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(parameter("loss weights must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.traj, self.im, self.sim, self.lwm, self.bev, self.agent]
    }
}

/// Unweighted loss components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub traj: f64,
    pub im: f64,
    pub sim: f64,
    pub lwm: f64,
    pub bev: f64,
    pub agent: f64,
}

impl LossParts {
    pub fn as_array(&self) -> [f64; 6] {
        [self.traj, self.im, self.sim, self.lwm, self.bev, self.agent]
    }
}

/// Weighted sum of the components; refuses non-finite parts.
pub fn total_loss(parts: &LossParts, w: &LossWeights) -> Result<f64> {
    let p = parts.as_array();
    if let Some(i) = p.iter().position(|v| !v.is_finite()) {
        let names = ["traj", "im", "sim", "lwm", "bev", "agent"];
        return Err(Error::Divergence { step: 0, detail: format!("{} loss is {}", names[i], p[i]) });
    }
    Ok(p.iter().zip(w.as_array()).map(|(a, b)| a * b).sum())
}

/// Index of the candidate closest to `gt` in stacked L2; ties go to the
/// lowest index.
pub fn wta_winner(candidates: &[Trajectory], gt: &Trajectory) -> Result<usize> {
    if candidates.is_empty() {
        return Err(parameter("winner-take-all needs at least one candidate"));
    }
    let mut best = (0, f64::INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let d = l2_distance(c, gt)?;
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// Mean absolute deviation over stacked `(x, y, psi)` coordinates, heading
/// differences wrapped.
pub fn l1_stacked(pred: &Trajectory, gt: &Trajectory) -> f64 {
    let total: f64 = pred
        .points
        .iter()
        .zip(&gt.points)
        .map(|(a, b)| (a.x - b.x).abs() + (a.y - b.y).abs() + angle_diff(a.psi, b.psi).abs())
        .sum();
    total / (3 * pred.len()) as f64
}

/// Gradient of [`l1_stacked`] with respect to the prediction, as
/// `(d/dpositions, d/dheadings)`.
pub fn l1_stacked_grad(pred: &Trajectory, gt: &Trajectory) -> (Vec<[f64; 2]>, Vec<f64>) {
    let scale = 1.0 / (3 * pred.len()) as f64;
    let sign = |v: f64| if v > 0.0 { scale } else if v < 0.0 { -scale } else { 0.0 };
    let pos = pred.points.iter().zip(&gt.points).map(|(a, b)| [sign(a.x - b.x), sign(a.y - b.y)]).collect();
    let head = pred.points.iter().zip(&gt.points).map(|(a, b)| sign(angle_diff(a.psi, b.psi))).collect();
    (pos, head)
}

/// Winner-take-all: `(l1 loss of the winner, winner index)`.
pub fn wta_loss(candidates: &[Trajectory], gt: &Trajectory) -> Result<(f64, usize)> {
    let w = wta_winner(candidates, gt)?;
    Ok((l1_stacked(&candidates[w], gt), w))
}

/// Softmax of negative distances, shifted by the minimum for stability.
pub fn imitation_targets_from_distances(d: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = d.iter().map(|v| -v).collect();
    softmax(&neg)
}

/// Soft targets over candidates from their stacked L2 distance to the expert.
pub fn imitation_targets(candidates: &[Trajectory], gt: &Trajectory) -> Result<Vec<f64>> {
    let d = candidates.iter().map(|c| l2_distance(c, gt)).collect::<Result<Vec<_>>>()?;
    Ok(imitation_targets_from_distances(&d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Prediction entries raised to the clamp floor.
    pub clamped: usize,
}

/// `-sum_k r_k log p_k` with predictions floored at `1e-12`.
pub fn imitation_loss(pred: &[f64], target: &[f64]) -> CrossEntropy {
    let mut clamped = 0;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(&p, &r)| {
            if p < CLAMP {
                clamped += 1;
            }
            -r * p.max(CLAMP).ln()
        })
        .sum();
    CrossEntropy { loss, clamped }
}

/// Cross-entropy of `softmax(logits)` and its gradient in the logits.
pub fn imitation_loss_from_logits(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let loss = imitation_loss(&p, target).loss;
    let total: f64 = target.iter().sum();
    let grad = p.iter().zip(target).map(|(p, r)| total * p - r).collect();
    (loss, grad)
}

fn bce(p: f64, r: f64) -> f64 {
    let p = p.clamp(CLAMP, 1.0 - CLAMP);
    -(r * p.ln() + (1.0 - r) * (1.0 - p).ln())
}

/// Mean binary cross-entropy over all entries.
pub fn simulation_loss(pred: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(pred.len(), target.len());
    pred.iter().zip(target).map(|(&p, &r)| bce(p, r)).sum::<f64>() / pred.len().max(1) as f64
}

/// Mean BCE of `sigmoid(logits)` with its gradient in the logits.
pub fn simulation_loss_from_logits(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let m = logits.len().max(1) as f64;
    let p: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
    let loss = simulation_loss(&p, target);
    let grad = p.iter().zip(target).map(|(p, r)| (p - r) / m).collect();
    (loss, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self { gamma: 2.0, alpha: 0.25 }
    }
}

fn focal_term(p_t: f64, f: &FocalParams) -> f64 {
    let p_t = p_t.clamp(CLAMP, 1.0);
    -f.alpha * (1.0 - p_t).powf(f.gamma) * p_t.ln()
}

/// Mean over cells of `-alpha (1 - p_t)^gamma log p_t`, `p_t` being the
/// probability of the true class.
pub fn focal_loss(pred: &[f64], target: &[f64], f: &FocalParams) -> f64 {
    debug_assert_eq!(pred.len(), target.len());
    pred.iter()
        .zip(target)
        .map(|(&p, &y)| focal_term(if y > 0.5 { p } else { 1.0 - p }, f))
        .sum::<f64>()
        / pred.len().max(1) as f64
}

/// Focal loss of `sigmoid(logits)` and its gradient in the logits.
pub fn focal_loss_from_logits(logits: &[f64], target: &[f64], f: &FocalParams) -> (f64, Vec<f64>) {
    let m = logits.len().max(1) as f64;
    let p: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
    let loss = focal_loss(&p, target, f);
    let grad = p
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let positive = y > 0.5;
            let p_t = if positive { p } else { 1.0 - p }.max(CLAMP);
            let q = 1.0 - p_t;
            // d/dp_t of -a q^g ln p_t
            let dl = -f.alpha * (q.powf(f.gamma) / p_t - if f.gamma == 0.0 { 0.0 } else { f.gamma * q.powf(f.gamma - 1.0) * p_t.ln() });
            let dpt = p * (1.0 - p) * if positive { 1.0 } else { -1.0 };
            dl * dpt / m
        })
        .collect();
    (loss, grad)
}
