//! Trajectory vocabulary built by K-means over expert position sequences.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};
use crate::io::{read_json, write_json};
use crate::traj::{PositionSequence, Trajectory};

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub k: usize,
    pub seed: u64,
    pub anchors: Vec<Trajectory>,
}

impl Vocabulary {
    pub fn new(anchors: Vec<Trajectory>, seed: u64) -> Result<Self> {
        if anchors.is_empty() {
            return Err(parameter("vocabulary needs at least one anchor"));
        }
        let n = anchors[0].len();
        if anchors.iter().any(|a| a.len() != n) {
            return Err(parameter("vocabulary anchors must share one length"));
        }
        Ok(Self { k: anchors.len(), seed, anchors })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.anchors.first().map_or(0, Trajectory::len)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let v: Self = read_json(path.as_ref())?;
        if v.k != v.anchors.len() {
            return Err(Error::Format(format!("vocabulary declares k={} but holds {}", v.k, v.anchors.len())));
        }
        Ok(v)
    }
}

/// Diagnostics from a K-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansReport {
    pub iterations: usize,
    /// Sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![data[rng.random_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..data.len())
        };
        let c = data[pick].clone();
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x, &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd's K-means with k-means++ seeding. Empty clusters are reseeded with
/// the point farthest from its current center.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64) -> Result<(Vec<Vec<f64>>, KMeansReport)> {
    if data.is_empty() {
        return Err(parameter("k-means needs at least one point"));
    }
    let distinct: HashSet<Vec<u64>> = data
        .iter()
        .map(|x| x.iter().map(|v| v.to_bits()).collect())
        .collect();
    if k == 0 || k > distinct.len() {
        return Err(parameter(format!("k={k} must be in 1..={} distinct points", distinct.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(data, k, &mut rng);
    let dim = data[0].len();
    let mut assign = vec![usize::MAX; data.len()];
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        let mut total = 0.0;
        let mut dists = Vec::with_capacity(data.len());
        for (a, x) in assign.iter_mut().zip(data) {
            let (c, d) = nearest(&centers, x);
            if *a != c {
                *a = c;
                changed = true;
            }
            total += d;
            dists.push(d);
        }
        objective.push(total);
        if !changed {
            converged = true;
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, x) in assign.iter().zip(data) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = dists
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                centers[c] = data[far].clone();
                dists[far] = 0.0;
            }
        }
    }
    Ok((centers, KMeansReport { iterations, objective, converged }))
}

/// Clusters expert position sequences into `k` anchors. Anchor headings are
/// recomputed from the clustered positions.
pub fn build_vocabulary(experts: &[Trajectory], k: usize, seed: u64) -> Result<Vocabulary> {
    build_vocabulary_with_report(experts, k, seed).map(|(v, _)| v)
}

pub fn build_vocabulary_with_report(
    experts: &[Trajectory],
    k: usize,
    seed: u64,
) -> Result<(Vocabulary, KMeansReport)> {
    if experts.is_empty() {
        return Err(parameter("no expert trajectories to cluster"));
    }
    let dt = experts[0].dt;
    let data: Vec<Vec<f64>> = experts.iter().map(|e| e.positions().flatten()).collect();
    let (centers, report) = kmeans(&data, k, seed)?;
    let anchors = centers
        .iter()
        .map(|c| Trajectory::from_positions(&PositionSequence::from_flat(c), dt))
        .collect::<Result<Vec<_>>>()?;
    Ok((Vocabulary::new(anchors, seed)?, report))
}

/// Index of the anchor with the smallest positional distance; ties go to
/// the lowest index.
pub fn nearest_anchor(vocab: &Vocabulary, traj: &Trajectory) -> usize {
    let target = traj.positions();
    let mut best = (0, f64::INFINITY);
    for (i, a) in vocab.anchors.iter().enumerate() {
        let d = a.positions().squared_distance(&target);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}
