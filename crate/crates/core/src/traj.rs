//! Trajectory values and the distances used throughout the planner.
//!
//! A [`Trajectory`] is a fixed-length sequence of ego-frame waypoints
//! `(x, y, psi)` sampled every `dt` seconds. Positions are meters, headings
//! radians in `(-pi, pi]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Default number of waypoints over the planning horizon.
pub const DEFAULT_WAYPOINTS: usize = 8;
/// Default seconds between waypoints (4 s horizon).
pub const DEFAULT_DT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self { x, y, psi }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

impl From<[f64; 3]> for Waypoint {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<Waypoint> for [f64; 3] {
    fn from(w: Waypoint) -> Self {
        [w.x, w.y, w.psi]
    }
}

/// Which coordinates enter a trajectory distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// `(x, y, psi)` with unit weights; the heading term uses the wrapped
    /// angular difference.
    #[default]
    Stacked,
    /// `(x, y)` only.
    Positions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub points: Vec<Waypoint>,
}

impl Trajectory {
    /// Builds a trajectory, wrapping headings into `(-pi, pi]`.
    pub fn new(points: Vec<Waypoint>, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(contract(format!("dt must be positive and finite, got {dt}")));
        }
        let mut out = Vec::with_capacity(points.len());
        for (i, w) in points.into_iter().enumerate() {
            if !(w.x.is_finite() && w.y.is_finite()) {
                return Err(contract(format!("waypoint {i} has a non-finite position")));
            }
            out.push(Waypoint::new(w.x, w.y, wrap_heading(w.psi)?));
        }
        Ok(Self { dt, points: out })
    }

    /// Builds a trajectory whose headings follow the direction of travel.
    pub fn from_positions(positions: &PositionSequence, dt: f64) -> Result<Self> {
        let psi = headings_from_positions(&positions.points);
        let points = positions
            .points
            .iter()
            .zip(psi)
            .map(|(p, h)| Waypoint::new(p[0], p[1], h))
            .collect();
        Self::new(points, dt)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> PositionSequence {
        PositionSequence {
            points: self.points.iter().map(Waypoint::position).collect(),
        }
    }

    pub fn headings(&self) -> Vec<f64> {
        self.points.iter().map(|w| w.psi).collect()
    }

    /// Row-major `[x0, y0, psi0, x1, ...]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flat_map(|w| [w.x, w.y, w.psi]).collect()
    }

    /// Mean magnitude of the positional second difference; a kink measure.
    pub fn mean_second_difference(&self) -> f64 {
        let p = &self.points;
        if p.len() < 3 {
            return 0.0;
        }
        let total: f64 = p
            .windows(3)
            .map(|w| {
                let dx = w[2].x - 2.0 * w[1].x + w[0].x;
                let dy = w[2].y - 2.0 * w[1].y + w[0].y;
                dx.hypot(dy)
            })
            .sum();
        total / (p.len() - 2) as f64
    }
}

/// The 2D position subsequence of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSequence {
    pub points: Vec<[f64; 2]>,
}

impl PositionSequence {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(contract("position sequence has non-finite coordinates"));
        }
        Ok(Self { points })
    }

    pub fn zeros(n: usize) -> Self {
        Self { points: vec![[0.0; 2]; n] }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Row-major `[x0, y0, x1, y1, ...]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn from_flat(v: &[f64]) -> Self {
        Self {
            points: v.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| [p[0] * s, p[1] * s]).collect(),
        }
    }

    pub fn squared_distance(&self, other: &Self) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
            .sum()
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(contract(format!("trajectory length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Wrapped difference `a - b` in `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

pub(crate) fn wrap_angle(psi: f64) -> f64 {
    if psi > -PI && psi <= PI {
        return psi;
    }
    let r = (psi + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        PI
    } else {
        r
    }
}

/// Maps a finite angle onto `(-pi, pi]`.
pub fn wrap_heading(psi: f64) -> Result<f64> {
    if !psi.is_finite() {
        return Err(contract(format!("heading must be finite, got {psi}")));
    }
    Ok(wrap_angle(psi))
}

/// Squared distance between trajectories under `mode`.
pub fn squared_distance(a: &Trajectory, b: &Trajectory, mode: DistanceMode) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    Ok(a.points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| {
            let pos = (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
            match mode {
                DistanceMode::Stacked => pos + angle_diff(p.psi, q.psi).powi(2),
                DistanceMode::Positions => pos,
            }
        })
        .sum())
}

/// Euclidean norm of the stacked `(x, y, psi)` differences.
pub fn l2_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    l2_distance_with(a, b, DistanceMode::Stacked)
}

pub fn l2_distance_with(a: &Trajectory, b: &Trajectory, mode: DistanceMode) -> Result<f64> {
    squared_distance(a, b, mode).map(f64::sqrt)
}

/// Average displacement error over 2D positions.
pub fn ade(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    check_lengths(pred.len(), gt.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .points
        .iter()
        .zip(&gt.points)
        .map(|(p, q)| (p.x - q.x).hypot(p.y - q.y))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Heading of travel per waypoint: `atan2` of the forward delta, with the
/// final heading repeating the previous one.
pub fn headings_from_positions(points: &[[f64; 2]]) -> Vec<f64> {
    let n = points.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n.saturating_sub(1) {
        let dx = points[i + 1][0] - points[i][0];
        let dy = points[i + 1][1] - points[i][1];
        out.push(dy.atan2(dx));
    }
    match out.last().copied() {
        Some(last) => out.push(last),
        None if n == 1 => out.push(0.0),
        None => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_traj(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
        let pts = (0..n)
            .map(|_| {
                Waypoint::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-3.0..3.0),
                )
            })
            .collect();
        Trajectory::new(pts, DEFAULT_DT).unwrap()
    }

    #[test]
    fn l2_identity_and_345() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_traj(&mut rng, 8);
        assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
        let p = Trajectory::new(vec![Waypoint::new(0.0, 0.0, 0.0)], 0.5).unwrap();
        let q = Trajectory::new(vec![Waypoint::new(3.0, 4.0, 0.0)], 0.5).unwrap();
        assert_eq!(l2_distance(&p, &q).unwrap(), 5.0);
    }

    #[test]
    fn l2_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_traj(&mut rng, 8);
            let b = random_traj(&mut rng, 8);
            let fa = a.flatten();
            let fb = b.flatten();
            let mut acc = 0.0;
            for i in 0..fa.len() {
                let mut d = fa[i] - fb[i];
                if i % 3 == 2 {
                    // headings within (-3, 3) differ by less than 2*pi
                    while d > PI {
                        d -= 2.0 * PI;
                    }
                    while d <= -PI {
                        d += 2.0 * PI;
                    }
                }
                acc += d * d;
            }
            let got = l2_distance(&a, &b).unwrap();
            assert!((got - acc.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_traj(&mut rng, 8);
        let b = random_traj(&mut rng, 7);
        assert!(matches!(l2_distance(&a, &b), Err(crate::Error::Contract(_))));
        assert!(matches!(ade(&a, &b), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn ade_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_traj(&mut rng, 8);
        assert_eq!(ade(&a, &a).unwrap(), 0.0);
        let shifted = Trajectory::new(
            a.points.iter().map(|w| Waypoint::new(w.x + 1.0, w.y, w.psi)).collect(),
            a.dt,
        )
        .unwrap();
        assert!((ade(&shifted, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = random_traj(&mut rng, 8);
        let mut per_step = Vec::new();
        for t in 0..8 {
            let dx = a.points[t].x - b.points[t].x;
            let dy = a.points[t].y - b.points[t].y;
            per_step.push((dx * dx + dy * dy).sqrt());
        }
        let oracle = per_step.iter().sum::<f64>() / 8.0;
        assert!((ade(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_heading(0.0).unwrap(), 0.0);
        assert!((wrap_heading(1.5 * PI).unwrap() + 0.5 * PI).abs() < 1e-12);
        // oracle: add 2*pi until inside (-pi, pi]
        let mut x = -7.0 * PI;
        while x <= -PI {
            x += 2.0 * PI;
        }
        let got = wrap_heading(-7.0 * PI).unwrap();
        assert!((got - x).abs() < 1e-9, "{got} vs {x}");
        assert!((got - PI).abs() < 1e-9);
        assert_eq!(wrap_heading(PI).unwrap(), PI);
        assert_eq!(wrap_heading(-PI).unwrap(), PI);
        assert!(wrap_heading(f64::NAN).is_err());
        assert!(wrap_heading(f64::INFINITY).is_err());
    }

    #[test]
    fn headings_follow_travel_direction() {
        let h = headings_from_positions(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        assert_eq!(h, vec![0.0, PI / 2.0, PI / 2.0]);
    }

    #[test]
    fn json_layout() {
        let t = Trajectory::new(vec![Waypoint::new(1.0, 2.0, 0.5)], 0.5).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"dt":0.5,"points":[[1.0,2.0,0.5]]}"#);
        let back: Trajectory = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
