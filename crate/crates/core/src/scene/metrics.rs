//! Rule-based driving sub-metrics and their PDMS / EPDMS aggregation.

use serde::{Deserialize, Serialize};

use super::geometry::{dot, norm, project_onto_polyline, sub, to_local, Obb};
use super::Scene;
use crate::error::{contract, Result};
use crate::traj::{angle_diff, Trajectory};

/// Thresholds used by [`evaluate_submetrics_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Seconds; gap over closing speed below this fails TTC.
    pub ttc_threshold: f64,
    /// m/s^2
    pub a_max: f64,
    /// rad/s
    pub r_max: f64,
    pub ego_half_length: f64,
    pub ego_half_width: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ttc_threshold: 1.0,
            a_max: 3.0,
            r_max: 0.8,
            ego_half_length: 2.25,
            ego_half_width: 1.0,
        }
    }
}

/// NC, DAC, EP, TTC, Comf, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubMetrics {
    pub nc: f64,
    pub dac: f64,
    pub ep: f64,
    pub ttc: f64,
    pub comf: f64,
}

impl SubMetrics {
    pub fn new(nc: f64, dac: f64, ep: f64, ttc: f64, comf: f64) -> Result<Self> {
        let m = Self { nc, dac, ep, ttc, comf };
        if m.as_array().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(contract(format!("sub-metrics must lie in [0, 1]: {m:?}")));
        }
        Ok(m)
    }

    pub fn ones() -> Self {
        Self { nc: 1.0, dac: 1.0, ep: 1.0, ttc: 1.0, comf: 1.0 }
    }

    /// `[nc, dac, ep, ttc, comf]`
    pub fn as_array(&self) -> [f64; 5] {
        [self.nc, self.dac, self.ep, self.ttc, self.comf]
    }
}

/// `NC * DAC * (5 EP + 5 TTC + 2 Comf) / 12`
pub fn pdms(m: &SubMetrics) -> f64 {
    m.nc * m.dac * (5.0 * m.ep + 5.0 * m.ttc + 2.0 * m.comf) / 12.0
}

/// The nine inputs of the extended score. Only the aggregation is modelled;
/// the synthetic world does not produce DDC/TLC/LK/HC/EC itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedSubMetrics {
    pub nc: f64,
    pub dac: f64,
    pub ddc: f64,
    pub tlc: f64,
    pub ep: f64,
    pub ttc: f64,
    pub lk: f64,
    pub hc: f64,
    pub ec: f64,
}

impl ExtendedSubMetrics {
    pub fn new(values: [f64; 9]) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(contract(format!("extended sub-metrics must lie in [0, 1]: {values:?}")));
        }
        let [nc, dac, ddc, tlc, ep, ttc, lk, hc, ec] = values;
        Ok(Self { nc, dac, ddc, tlc, ep, ttc, lk, hc, ec })
    }
}

/// `NC * DAC * DDC * TLC * (5 EP + 5 TTC + 2 LK + 2 HC + 2 EC) / 16`
pub fn epdms(m: &ExtendedSubMetrics) -> f64 {
    m.nc * m.dac
        * m.ddc
        * m.tlc
        * (5.0 * m.ep + 5.0 * m.ttc + 2.0 * m.lk + 2.0 * m.hc + 2.0 * m.ec)
        / 16.0
}

/// World-frame poses of an ego-frame trajectory.
pub(crate) fn world_poses(scene: &Scene, traj: &Trajectory) -> Vec<([f64; 2], f64)> {
    let ego = &scene.ego;
    let (s, c) = ego.heading.sin_cos();
    traj.points
        .iter()
        .map(|w| {
            let p = [
                ego.position[0] + c * w.x - s * w.y,
                ego.position[1] + s * w.x + c * w.y,
            ];
            (p, ego.heading + w.psi)
        })
        .collect()
}

/// Signed progress of the trajectory's last waypoint along the goal axis.
pub fn progress(scene: &Scene, traj: &Trajectory) -> f64 {
    match world_poses(scene, traj).last() {
        Some((p, _)) => dot(sub(*p, scene.ego.position), scene.goal_progress_axis),
        None => 0.0,
    }
}

pub fn evaluate_submetrics(scene: &Scene, traj: &Trajectory) -> Result<SubMetrics> {
    evaluate_submetrics_with(scene, traj, &EvalConfig::default())
}

/// Scores a trajectory against the scene's rules.
///
/// Waypoint `i` (zero-based) is reached at time `(i + 1) * dt`. Agents move
/// at constant velocity. TTC only considers agents inside the ego's lateral
/// band ahead of it, using the longitudinal gap and closing speed.
pub fn evaluate_submetrics_with(
    scene: &Scene,
    traj: &Trajectory,
    cfg: &EvalConfig,
) -> Result<SubMetrics> {
    let n = scene.expert.len();
    if traj.len() != n {
        return Err(contract(format!("trajectory has {} waypoints, scene expects {n}", traj.len())));
    }
    let dt = traj.dt;
    let poses = world_poses(scene, traj);

    let mut nc = 1.0;
    let mut ttc = 1.0;
    let mut prev = scene.ego.position;
    for (i, &(p, heading)) in poses.iter().enumerate() {
        let t = (i + 1) as f64 * dt;
        let ego_box = Obb {
            center: p,
            heading,
            half_length: cfg.ego_half_length,
            half_width: cfg.ego_half_width,
        };
        let ego_vel = [(p[0] - prev[0]) / dt, (p[1] - prev[1]) / dt];
        let fwd = [heading.cos(), heading.sin()];
        for agent in &scene.agents {
            let ap = agent.position_at(t);
            if ego_box.overlaps(&agent.footprint_at(t)) {
                nc = 0.0;
            }
            let rel = to_local(ap, p, heading);
            if rel[0] > 0.0 && rel[1].abs() <= cfg.ego_half_width + agent.half_extent {
                let gap = rel[0] - cfg.ego_half_length - agent.half_extent;
                let closing = dot(sub(ego_vel, agent.velocity()), fwd);
                if gap <= 0.0 || (closing > 0.0 && gap / closing < cfg.ttc_threshold) {
                    ttc = 0.0;
                }
            }
        }
        prev = p;
    }

    let dac = if poses
        .iter()
        .all(|(p, _)| project_onto_polyline(&scene.corridor.centerline, *p).0.abs() <= scene.corridor.half_width)
    {
        1.0
    } else {
        0.0
    };

    let expert_progress = progress(scene, &scene.expert);
    let own = progress(scene, traj);
    let ep = if expert_progress > 1e-9 {
        (own / expert_progress).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let comf = if comfortable(traj, cfg) { 1.0 } else { 0.0 };
    Ok(SubMetrics { nc, dac, ep, ttc, comf })
}

/// Acceleration and yaw-rate limits along the trajectory, starting from the
/// ego at the origin with zero heading.
pub fn comfortable(traj: &Trajectory, cfg: &EvalConfig) -> bool {
    let (max_acc, max_yaw) = peak_motion(traj);
    max_acc <= cfg.a_max && max_yaw <= cfg.r_max
}

/// Peak |acceleration| and |yaw rate| from finite differences.
pub fn peak_motion(traj: &Trajectory) -> (f64, f64) {
    let dt = traj.dt;
    let mut prev = [0.0, 0.0];
    let mut vel = Vec::with_capacity(traj.len());
    for w in &traj.points {
        vel.push([(w.x - prev[0]) / dt, (w.y - prev[1]) / dt]);
        prev = [w.x, w.y];
    }
    let max_acc = vel
        .windows(2)
        .map(|v| norm(sub(v[1], v[0])) / dt)
        .fold(0.0, f64::max);
    let mut prev_psi = 0.0;
    let mut max_yaw: f64 = 0.0;
    for w in &traj.points {
        max_yaw = max_yaw.max(angle_diff(w.psi, prev_psi).abs() / dt);
        prev_psi = w.psi;
    }
    (max_acc, max_yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, Difficulty};
    use crate::traj::Waypoint;

    #[test]
    fn pdms_examples() {
        assert_eq!(pdms(&SubMetrics::ones()), 1.0);
        let m = SubMetrics::new(0.9, 1.0, 0.8, 1.0, 1.0).unwrap();
        assert!((pdms(&m) - 0.825).abs() < 1e-12);
        let gated = SubMetrics::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(pdms(&gated), 0.0);
    }

    #[test]
    fn epdms_examples() {
        assert_eq!(epdms(&ExtendedSubMetrics::new([1.0; 9]).unwrap()), 1.0);
        let m = ExtendedSubMetrics::new([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((epdms(&m) - 0.625).abs() < 1e-12);
        let mut v = [1.0; 9];
        v[3] = 0.0;
        assert_eq!(epdms(&ExtendedSubMetrics::new(v).unwrap()), 0.0);
        assert!(ExtendedSubMetrics::new([1.5; 9]).is_err());
    }

    #[test]
    fn out_of_range_submetrics_rejected() {
        assert!(SubMetrics::new(1.1, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(SubMetrics::new(1.0, -0.1, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn stationary_trajectory_makes_no_progress() {
        let scene = generate_scene(1, Difficulty::Routine).unwrap();
        let still = Trajectory::new(vec![Waypoint::new(0.0, 0.0, 0.0); 8], 0.5).unwrap();
        let m = evaluate_submetrics(&scene, &still).unwrap();
        assert_eq!(m.ep, 0.0);
    }

    #[test]
    fn driving_through_an_agent_is_a_collision() {
        let mut scene = generate_scene(1, Difficulty::Routine).unwrap();
        // a stopped agent parked on the expert's fourth waypoint
        let target = world_poses(&scene, &scene.expert)[3];
        scene.agents = vec![super::super::Agent {
            position: target.0,
            heading: target.1,
            speed: 0.0,
            half_extent: 1.0,
        }];
        let m = evaluate_submetrics(&scene, &scene.expert).unwrap();
        assert_eq!(m.nc, 0.0);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let scene = generate_scene(1, Difficulty::Routine).unwrap();
        let short = Trajectory::new(vec![Waypoint::new(1.0, 0.0, 0.0); 3], 0.5).unwrap();
        assert!(evaluate_submetrics(&scene, &short).is_err());
    }

    #[test]
    fn kinked_trajectory_is_uncomfortable() {
        let pts: Vec<_> = (1..=8)
            .map(|i| Waypoint::new(5.0 * i as f64, if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0))
            .collect();
        let t = Trajectory::new(pts, 0.5).unwrap();
        assert!(!comfortable(&t, &EvalConfig::default()));
        let smooth: Vec<_> = (1..=8).map(|i| Waypoint::new(5.0 * i as f64, 0.0, 0.0)).collect();
        assert!(comfortable(&Trajectory::new(smooth, 0.5).unwrap(), &EvalConfig::default()));
    }
}
