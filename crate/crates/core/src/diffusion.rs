//! Noise schedule, forward noising and the deterministic DDIM reverse pass
//! started from a noised anchor.

use serde::{Deserialize, Serialize};

use crate::error::{contract, parameter, Result};
use crate::traj::PositionSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    /// `alpha[t - 1]` is alpha_t for `t = 1..=T`.
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub t_truncate: usize,
    pub ddim_stride: usize,
}

/// Running products of `alphas`.
pub fn cumulative_products(alphas: &[f64]) -> Vec<f64> {
    alphas
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect()
}

impl Default for NoiseSchedule {
    /// T = 100, beta linear in [1e-4, 0.05], truncation at 8, stride 4.
    fn default() -> Self {
        Self::linear(100, 1e-4, 0.05, 8, 4).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    pub fn linear(
        steps: usize,
        beta_start: f64,
        beta_end: f64,
        t_truncate: usize,
        ddim_stride: usize,
    ) -> Result<Self> {
        if steps < 2 {
            return Err(parameter("schedule needs at least two steps"));
        }
        let alphas = (0..steps)
            .map(|i| 1.0 - (beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64))
            .collect();
        Self::from_alphas(alphas, t_truncate, ddim_stride)
    }

    pub fn from_alphas(alpha: Vec<f64>, t_truncate: usize, ddim_stride: usize) -> Result<Self> {
        if alpha.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(parameter("every alpha_t must lie in (0, 1)"));
        }
        let total = alpha.len();
        if t_truncate == 0 || 4 * t_truncate > total {
            return Err(parameter(format!(
                "truncation step {t_truncate} must be in 1..={}",
                total / 4
            )));
        }
        if ddim_stride == 0 {
            return Err(parameter("DDIM stride must be positive"));
        }
        let alpha_bar = cumulative_products(&alpha);
        Ok(Self { alpha, alpha_bar, t_truncate, ddim_stride })
    }

    pub fn total_steps(&self) -> usize {
        self.alpha.len()
    }

    /// alpha-bar at step `t`, with alpha-bar_0 = 1.
    pub fn alpha_bar_at(&self, t: usize) -> f64 {
        if t == 0 { 1.0 } else { self.alpha_bar[t - 1] }
    }

    /// `(t, t_prev)` pairs visited by the reverse pass, ending at `t_prev = 0`.
    pub fn reverse_steps(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut t = self.t_truncate;
        while t > 0 {
            let prev = t.saturating_sub(self.ddim_stride);
            out.push((t, prev));
            t = prev;
        }
        out
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.total_steps() {
            return Err(parameter(format!("step {t} outside 1..={}", self.total_steps())));
        }
        Ok(())
    }

    /// Coefficients `(c0, ct)` with `ddim_step(p_t, p0_hat) = c0 * p0_hat + ct * p_t`.
    pub fn ddim_coefficients(&self, t: usize, t_prev: usize) -> Result<(f64, f64)> {
        self.check_step(t)?;
        if t_prev >= t {
            return Err(parameter(format!("DDIM step needs t_prev < t, got {t_prev} >= {t}")));
        }
        Ok(ddim_coefficients_from(self.alpha_bar_at(t), self.alpha_bar_at(t_prev)))
    }
}

fn ddim_coefficients_from(ab_t: f64, ab_prev: f64) -> (f64, f64) {
    if ab_prev == 1.0 {
        return (1.0, 0.0);
    }
    let ct = ((1.0 - ab_prev) / (1.0 - ab_t)).sqrt();
    (ab_prev.sqrt() - ct * ab_t.sqrt(), ct)
}

fn combine(a: &[[f64; 2]], ca: f64, b: &[[f64; 2]], cb: f64) -> Vec<[f64; 2]> {
    a.iter()
        .zip(b)
        .map(|(x, y)| [ca * x[0] + cb * y[0], ca * x[1] + cb * y[1]])
        .collect()
}

fn check_shape(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(contract(format!("noise block has {b} rows, positions have {a}")));
    }
    Ok(())
}

/// `sqrt(ab_t) * p0 + sqrt(1 - ab_t) * eps`
pub fn forward_noise(
    sched: &NoiseSchedule,
    p0: &PositionSequence,
    t: usize,
    eps: &[[f64; 2]],
) -> Result<PositionSequence> {
    sched.check_step(t)?;
    check_shape(p0.len(), eps.len())?;
    let ab = sched.alpha_bar_at(t);
    Ok(PositionSequence { points: combine(&p0.points, ab.sqrt(), eps, (1.0 - ab).sqrt()) })
}

/// The anchor noised to the truncation step with already-adapted noise.
pub fn truncated_init(
    sched: &NoiseSchedule,
    anchor: &PositionSequence,
    eps_adapted: &[[f64; 2]],
) -> Result<PositionSequence> {
    forward_noise(sched, anchor, sched.t_truncate, eps_adapted)
}

/// Deterministic DDIM update from `t` to `t_prev`; returns `p0_hat`
/// itself at `t_prev = 0`.
pub fn ddim_step(
    sched: &NoiseSchedule,
    p_t: &PositionSequence,
    p0_hat: &PositionSequence,
    t: usize,
    t_prev: usize,
) -> Result<PositionSequence> {
    let (c0, ct) = sched.ddim_coefficients(t, t_prev)?;
    check_shape(p_t.len(), p0_hat.len())?;
    if t_prev == 0 {
        return Ok(p0_hat.clone());
    }
    Ok(PositionSequence { points: combine(&p0_hat.points, c0, &p_t.points, ct) })
}

/// Textbook DDIM update written through the implied noise, for checking
/// [`ddim_step`].
pub fn ddim_update_via_noise(ab_t: f64, ab_prev: f64, p_t: &[[f64; 2]], p0_hat: &[[f64; 2]]) -> Vec<[f64; 2]> {
    p_t.iter()
        .zip(p0_hat)
        .map(|(pt, p0)| {
            let mut out = [0.0; 2];
            for d in 0..2 {
                let eps = (pt[d] - ab_t.sqrt() * p0[d]) / (1.0 - ab_t).sqrt();
                out[d] = ab_prev.sqrt() * p0[d] + (1.0 - ab_prev).sqrt() * eps;
            }
            out
        })
        .collect()
}

/// What a denoiser produces for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    /// Offset added to the anchor to estimate the clean trajectory.
    pub delta: Vec<[f64; 2]>,
    /// Headings in `(-pi, pi)`.
    pub heading: Vec<f64>,
}

pub trait Denoiser {
    fn refine(&self, p_t: &PositionSequence, z: &[f64], t: usize) -> Result<Refinement>;
}

/// A denoiser that never moves the anchor.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroRefiner;

impl Denoiser for ZeroRefiner {
    fn refine(&self, p_t: &PositionSequence, _z: &[f64], _t: usize) -> Result<Refinement> {
        Ok(Refinement { delta: vec![[0.0; 2]; p_t.len()], heading: vec![0.0; p_t.len()] })
    }
}

/// Runs the truncated reverse pass for one anchor and returns the refined
/// positions with the headings of the final step.
pub fn denoise_anchor<D: Denoiser + ?Sized>(
    sched: &NoiseSchedule,
    denoiser: &D,
    z: &[f64],
    anchor: &PositionSequence,
    eps_adapted: &[[f64; 2]],
) -> Result<(PositionSequence, Vec<f64>)> {
    let mut p_t = truncated_init(sched, anchor, eps_adapted)?;
    let mut heading = vec![0.0; anchor.len()];
    for (t, t_prev) in sched.reverse_steps() {
        let r = denoiser.refine(&p_t, z, t)?;
        check_shape(anchor.len(), r.delta.len())?;
        let p0_hat = PositionSequence {
            points: anchor
                .points
                .iter()
                .zip(&r.delta)
                .map(|(a, d)| [a[0] + d[0], a[1] + d[1]])
                .collect(),
        };
        p_t = ddim_step(sched, &p_t, &p0_hat, t, t_prev)?;
        heading = r.heading;
    }
    Ok((p_t, heading))
}
