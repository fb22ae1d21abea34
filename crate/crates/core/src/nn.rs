//! Dense networks with hand-written reverse mode, and the Adam optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Fully connected network; SiLU between layers, linear output.
///
/// Parameters are stored flat, layer by layer, as the row-major
/// `out x in` weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    rows: usize,
    /// Layer inputs (post-activation), one per layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    /// Scaled uniform initialisation; the last layer is zero when `zero_head`.
    pub fn new(sizes: &[usize], seed: u64, zero_head: bool) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let zero = zero_head && l + 1 == layers;
            for _ in 0..fan_in * fan_out {
                params.push(if zero { 0.0 } else { rng.random_range(-bound..bound) });
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let n = Self::param_count(sizes);
        Self { sizes: sizes.to_vec(), params: vec![0.0; n] }
    }

    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for w in self.sizes.windows(2) {
            off.push(off.last().unwrap() + w[0] * w[1] + w[1]);
        }
        off
    }

    pub fn check(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.params.len() != Self::param_count(&self.sizes) {
            return Err(contract("MLP parameter count does not match its layer sizes"));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(contract("MLP has non-finite parameters"));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64], rows: usize) -> Result<()> {
        if x.len() != rows * self.input_dim() {
            return Err(contract(format!(
                "MLP input has {} values, expected {rows} x {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Batched forward pass over `rows` inputs laid out row-major.
    pub fn forward(&self, x: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.forward_cached(x, rows).map(|(y, _)| y)
    }

    pub fn forward_cached(&self, x: &[f64], rows: usize) -> Result<(Vec<f64>, MlpCache)> {
        self.check_input(x, rows)?;
        let off = self.layer_offsets();
        let layers = self.sizes.len() - 1;
        let mut cache = MlpCache { rows, inputs: Vec::with_capacity(layers), pre: Vec::new() };
        let mut h = x.to_vec();
        for l in 0..layers {
            let (din, dout) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off[l]..off[l] + din * dout];
            let b = &self.params[off[l] + din * dout..off[l + 1]];
            let mut z = vec![0.0; rows * dout];
            for r in 0..rows {
                let xr = &h[r * din..(r + 1) * din];
                for o in 0..dout {
                    let wr = &w[o * din..(o + 1) * din];
                    z[r * dout + o] = b[o] + wr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
                }
            }
            let last = l + 1 == layers;
            let next = if last { z.clone() } else { z.iter().map(|&v| silu(v)).collect() };
            cache.inputs.push(std::mem::replace(&mut h, next));
            if !last {
                cache.pre.push(z);
            }
        }
        Ok((h, cache))
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let off = self.layer_offsets();
        let layers = self.sizes.len() - 1;
        let rows = cache.rows;
        debug_assert_eq!(grad_out.len(), rows * self.output_dim());
        debug_assert_eq!(grad.len(), self.params.len());
        let mut g = grad_out.to_vec();
        for l in (0..layers).rev() {
            let (din, dout) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off[l]..off[l] + din * dout];
            let input = &cache.inputs[l];
            {
                let (gw, gb) = grad[off[l]..off[l + 1]].split_at_mut(din * dout);
                for r in 0..rows {
                    let xr = &input[r * din..(r + 1) * din];
                    for o in 0..dout {
                        let go = g[r * dout + o];
                        if go == 0.0 {
                            continue;
                        }
                        gb[o] += go;
                        for (gwi, xi) in gw[o * din..(o + 1) * din].iter_mut().zip(xr) {
                            *gwi += go * xi;
                        }
                    }
                }
            }
            let mut gx = vec![0.0; rows * din];
            for r in 0..rows {
                let gxr = &mut gx[r * din..(r + 1) * din];
                for o in 0..dout {
                    let go = g[r * dout + o];
                    if go == 0.0 {
                        continue;
                    }
                    for (gi, wi) in gxr.iter_mut().zip(&w[o * din..(o + 1) * din]) {
                        *gi += go * wi;
                    }
                }
            }
            if l > 0 {
                for (gi, z) in gx.iter_mut().zip(&cache.pre[l - 1]) {
                    *gi *= silu_grad(*z);
                }
            }
            g = gx;
        }
        g
    }
}

/// Adaptive-moment optimizer over one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

pub const TIME_EMBED_DIM: usize = 16;

/// Sinusoidal embedding of a diffusion step.
pub fn timestep_embedding(t: usize) -> [f64; TIME_EMBED_DIM] {
    let half = TIME_EMBED_DIM / 2;
    let mut out = [0.0; TIME_EMBED_DIM];
    for k in 0..half {
        let freq = 1.0 / 10_000f64.powf(k as f64 / half as f64);
        let a = t as f64 * freq;
        out[2 * k] = a.sin();
        out[2 * k + 1] = a.cos();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::new(&[5, 7, 6, 3], 2, false);
        for p in &mut net.params {
            *p += 0.05 * rng.random_range(-1.0..1.0);
        }
        let rows = 3;
        let x = randn(&mut rng, rows * 5);
        let up = randn(&mut rng, rows * 3);
        let f = |n: &Mlp, x: &[f64]| -> f64 {
            n.forward(x, rows).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = net.forward_cached(&x, rows).unwrap();
        let mut g = vec![0.0; net.params.len()];
        let gx = net.backward(&cache, &up, &mut g);
        let h = 1e-5;
        for i in (0..net.params.len()).step_by(7) {
            let mut p = net.clone();
            p.params[i] += h;
            let mut m = net.clone();
            m.params[i] -= h;
            let fd = (f(&p, &x) - f(&m, &x)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (f(&net, &xp) - f(&net, &xm)) / (2.0 * h);
            assert!((fd - gx[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "input {i}");
        }
    }

    #[test]
    fn zero_head_outputs_zero() {
        let net = Mlp::new(&[4, 8, 2], 3, true);
        let y = net.forward(&[1.0, -2.0, 0.5, 3.0], 1).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
        assert!(net.forward(&[1.0; 3], 1).is_err());
    }

    #[test]
    fn batch_rows_are_independent() {
        let net = Mlp::new(&[3, 5, 2], 4, false);
        let a = [0.1, 0.2, 0.3];
        let b = [-1.0, 0.0, 2.0];
        let both = net.forward(&[a, b].concat(), 2).unwrap();
        assert_eq!(&both[..2], &net.forward(&a, 1).unwrap()[..]);
        assert_eq!(&both[2..], &net.forward(&b, 1).unwrap()[..]);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2);
        for _ in 0..2000 {
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            opt.update(&mut p, &g, 0.01);
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2);
    }

    #[test]
    fn activations() {
        assert_eq!(silu(0.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        let s = softmax(&[1000.0, 1000.0]);
        assert_eq!(s, vec![0.5, 0.5]);
        let e = timestep_embedding(0);
        assert!(e.chunks(2).all(|c| c == [0.0, 1.0]));
        assert_ne!(timestep_embedding(4), timestep_embedding(8));
    }
}
