//! Horizon-aware noise adapter.
//!
//! Forward-process noise is low-pass filtered along the waypoint axis with a
//! normalized Gaussian kernel and then scaled per waypoint by
//! `s~_i = (i / (n - 1) + eps)^alpha * exp(g_i)`, so near-horizon waypoints
//! receive little noise and far ones the most.

use serde::{Deserialize, Serialize};

use crate::error::{parameter, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HatnaConfig {
    pub kernel_size: usize,
    pub kernel_sigma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    /// Learnable log-gains, one per waypoint.
    pub gain_log: Vec<f64>,
}

impl HatnaConfig {
    /// Size-5 kernel with `sigma = size / 4`, `alpha = 1`, `eps = 1e-6`, zero gains.
    pub fn new(n: usize) -> Self {
        Self::with_kernel(n, 5)
    }

    pub fn with_kernel(n: usize, kernel_size: usize) -> Self {
        Self {
            kernel_size,
            kernel_sigma: kernel_size as f64 / 4.0,
            alpha: 1.0,
            epsilon: 1e-6,
            gain_log: vec![0.0; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(parameter(format!("kernel size {} must be odd", self.kernel_size)));
        }
        if !(self.kernel_sigma > 0.0) || !(self.alpha > 0.0) || !(self.epsilon >= 0.0) {
            return Err(parameter("kernel sigma and alpha must be positive, epsilon nonnegative"));
        }
        if self.gain_log.len() < 2 || self.gain_log.iter().any(|g| !g.is_finite()) {
            return Err(parameter("gain_log needs at least two finite entries"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.gain_log.len()
    }

    /// Symmetric Gaussian weights summing to one.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.kernel_size / 2) as isize;
        let w: Vec<f64> = (-r..=r)
            .map(|j| (-(j * j) as f64 / (2.0 * self.kernel_sigma * self.kernel_sigma)).exp())
            .collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }

    /// Convolves every column independently along the waypoint axis with
    /// replicate padding.
    pub fn smooth<const D: usize>(&self, noise: &[[f64; D]]) -> Vec<[f64; D]> {
        let kernel = self.kernel();
        let r = (kernel.len() / 2) as isize;
        let last = noise.len() as isize - 1;
        (0..noise.len() as isize)
            .map(|i| {
                let mut row = [0.0; D];
                for (k, w) in kernel.iter().enumerate() {
                    let src = (i + k as isize - r).clamp(0, last) as usize;
                    for d in 0..D {
                        row[d] += w * noise[src][d];
                    }
                }
                row
            })
            .collect()
    }

    /// Base profile times `exp(gain_log)`, over this config's horizon.
    pub fn scale_profile(&self) -> Vec<f64> {
        let n = self.horizon();
        base_profile(n, self.alpha, self.epsilon)
            .into_iter()
            .zip(&self.gain_log)
            .map(|(s, g)| s * g.exp())
            .collect()
    }

    pub fn adapt<const D: usize>(&self, noise: &[[f64; D]]) -> Vec<[f64; D]> {
        debug_assert_eq!(noise.len(), self.horizon());
        let scale = self.scale_profile();
        self.smooth(noise)
            .into_iter()
            .zip(scale)
            .map(|(mut row, s)| {
                row.iter_mut().for_each(|v| *v *= s);
                row
            })
            .collect()
    }

    /// Gradient of `sum(upstream * adapt(noise))` with respect to `gain_log`.
    pub fn gain_gradient<const D: usize>(&self, noise: &[[f64; D]], upstream: &[[f64; D]]) -> Vec<f64> {
        let scale = self.scale_profile();
        self.smooth(noise)
            .iter()
            .zip(upstream)
            .zip(scale)
            .map(|((row, up), s)| s * row.iter().zip(up).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// `(i / (n - 1) + eps)^alpha` for `i = 0..n`.
pub fn base_profile(n: usize, alpha: f64, epsilon: f64) -> Vec<f64> {
    let denom = n.saturating_sub(1).max(1) as f64;
    (0..n).map(|i| (i as f64 / denom + epsilon).powf(alpha)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_block(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| [StandardNormal.sample(rng), StandardNormal.sample(rng)])
            .collect()
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = HatnaConfig::new(8).kernel();
        assert_eq!(k.len(), 5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k[0], k[4]);
        assert_eq!(k[1], k[3]);
        assert!(k[2] > k[1] && k[1] > k[0]);
    }

    #[test]
    fn constant_noise_is_a_fixed_point_of_smoothing() {
        let cfg = HatnaConfig::new(8);
        let block = vec![[0.7, -1.3]; 8];
        for (a, b) in cfg.smooth(&block).iter().zip(&block) {
            assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn impulse_returns_the_kernel() {
        let cfg = HatnaConfig::new(8);
        let k = cfg.kernel();
        let mut block = vec![[0.0]; 8];
        block[4] = [1.0];
        let out = cfg.smooth(&block);
        let expect = [0.0, 0.0, k[0], k[1], k[2], k[3], k[4], 0.0];
        for (o, e) in out.iter().zip(expect) {
            assert!((o[0] - e).abs() < 1e-15);
        }
        // at the border the replicated sample collects the clipped taps
        let mut edge = vec![[0.0]; 8];
        edge[0] = [1.0];
        let out = cfg.smooth(&edge);
        assert!((out[0][0] - (k[0] + k[1] + k[2])).abs() < 1e-15);
        assert!((out[1][0] - (k[0] + k[1])).abs() < 1e-15);
        assert!((out[2][0] - k[0]).abs() < 1e-15);
        assert_eq!(out[3][0], 0.0);
    }

    #[test]
    fn alternating_sequence_loses_variation() {
        let cfg = HatnaConfig::new(8);
        let block: Vec<[f64; 1]> = (0..8).map(|i| [if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        let tv = |b: &[[f64; 1]]| b.windows(2).map(|w| (w[1][0] - w[0][0]).abs()).sum::<f64>();
        assert!(tv(&cfg.smooth(&block)) < tv(&block));
    }

    #[test]
    fn profile_examples() {
        let mut cfg = HatnaConfig::new(8);
        cfg.epsilon = 0.0;
        let p = cfg.scale_profile();
        for (i, v) in p.iter().enumerate() {
            assert!((v - i as f64 / 7.0).abs() < 1e-12);
        }
        let base = HatnaConfig::new(8).scale_profile();
        assert!(base.windows(2).all(|w| w[1] >= w[0]) && base[0] > 0.0);
        let mut doubled = HatnaConfig::new(8);
        doubled.gain_log = vec![2f64.ln(); 8];
        for (d, b) in doubled.scale_profile().iter().zip(&base) {
            assert!((d - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn adapt_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = HatnaConfig::new(8);
        cfg.gain_log = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let u = random_block(&mut rng, 8);
        let v = random_block(&mut rng, 8);
        let (a, b) = (1.7, -0.4);
        let mix: Vec<[f64; 2]> = u
            .iter()
            .zip(&v)
            .map(|(x, y)| [a * x[0] + b * y[0], a * x[1] + b * y[1]])
            .collect();
        let lhs = cfg.adapt(&mix);
        let (au, av) = (cfg.adapt(&u), cfg.adapt(&v));
        for i in 0..8 {
            for d in 0..2 {
                assert!((lhs[i][d] - (a * au[i][d] + b * av[i][d])).abs() < 1e-12);
            }
        }
        assert!(cfg.adapt(&vec![[0.0, 0.0]; 8]).iter().all(|r| r == &[0.0, 0.0]));
    }

    #[test]
    fn compensating_gains_give_identity() {
        let mut cfg = HatnaConfig::with_kernel(8, 1);
        cfg.epsilon = 1e-3;
        cfg.gain_log = base_profile(8, cfg.alpha, cfg.epsilon).iter().map(|s| -s.ln()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = random_block(&mut rng, 8);
        for (a, b) in cfg.adapt(&noise).iter().zip(&noise) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_commutes_with_reversal() {
        let cfg = HatnaConfig::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = random_block(&mut rng, 8);
        let mut rev = noise.clone();
        rev.reverse();
        let mut a = cfg.smooth(&noise);
        a.reverse();
        let b = cfg.smooth(&rev);
        for (x, y) in a.iter().zip(&b) {
            assert!((x[0] - y[0]).abs() < 1e-15 && (x[1] - y[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn gain_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cfg = HatnaConfig::new(8);
        cfg.gain_log = (0..8).map(|i| 0.05 * i as f64).collect();
        let noise = random_block(&mut rng, 8);
        let up = random_block(&mut rng, 8);
        let f = |c: &HatnaConfig| -> f64 {
            c.adapt(&noise)
                .iter()
                .zip(&up)
                .map(|(a, u)| a[0] * u[0] + a[1] * u[1])
                .sum()
        };
        let g = cfg.gain_gradient(&noise, &up);
        for i in 0..8 {
            let h = 1e-5;
            let mut p = cfg.clone();
            p.gain_log[i] += h;
            let mut m = cfg.clone();
            m.gain_log[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn validation() {
        assert!(HatnaConfig::new(8).validate().is_ok());
        assert!(HatnaConfig::with_kernel(8, 4).validate().is_err());
        assert!(HatnaConfig::new(1).validate().is_err());
    }
}
