//! Synthetic 2D driving scenes.
//!
//! A scene holds the ego state, constant-velocity agents, a drivable
//! corridor around a centerline, and an expert trajectory. Generated scenes
//! place the ego at the origin facing +x, so ego frame and world frame
//! coincide until a scene is moved with [`Scene::transformed`].

pub mod corpus;
pub mod encode;
pub mod geometry;
pub mod metrics;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::{PositionSequence, Trajectory, DEFAULT_DT, DEFAULT_WAYPOINTS};
use geometry::{point_at_arclength, project_onto_polyline, Obb, Rigid2};
use metrics::progress;

pub use encode::{encode_scene, AGENT_SLOTS, FEATURE_DIM};
pub use metrics::{
    epdms, evaluate_submetrics, evaluate_submetrics_with, pdms, EvalConfig, ExtendedSubMetrics, SubMetrics,
};

const MAX_ATTEMPTS: usize = 200;
const CENTERLINE_BACK: f64 = 10.0;
const CENTERLINE_AHEAD: f64 = 90.0;
const MAX_SPEED: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Routine,
    Interactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub position: [f64; 2],
    pub heading: f64,
    pub speed: f64,
}

/// A square footprint moving at constant velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub position: [f64; 2],
    pub heading: f64,
    pub speed: f64,
    pub half_extent: f64,
}

impl Agent {
    pub fn velocity(&self) -> [f64; 2] {
        [self.speed * self.heading.cos(), self.speed * self.heading.sin()]
    }

    pub fn position_at(&self, t: f64) -> [f64; 2] {
        let v = self.velocity();
        [self.position[0] + v[0] * t, self.position[1] + v[1] * t]
    }

    pub fn footprint_at(&self, t: f64) -> Obb {
        Obb {
            center: self.position_at(t),
            heading: self.heading,
            half_length: self.half_extent,
            half_width: self.half_extent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub centerline: Vec<[f64; 2]>,
    pub half_width: f64,
}

impl Corridor {
    /// Signed lateral offset of a world point from the centerline.
    pub fn lateral_offset(&self, p: [f64; 2]) -> f64 {
        project_onto_polyline(&self.centerline, p).0
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.lateral_offset(p).abs() <= self.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub rng_seed: u64,
    pub difficulty: Difficulty,
    pub ego: EgoState,
    pub agents: Vec<Agent>,
    pub corridor: Corridor,
    /// Unit vector in the world frame.
    pub goal_progress_axis: [f64; 2],
    /// Ego-frame expert trajectory.
    pub expert: Trajectory,
}

impl Scene {
    /// Moves the whole world rigidly. Ego-frame quantities (the expert) are
    /// unchanged.
    pub fn transformed(&self, r: &Rigid2) -> Scene {
        let mut out = self.clone();
        out.ego.position = r.apply(self.ego.position);
        out.ego.heading += r.theta;
        for a in &mut out.agents {
            a.position = r.apply(a.position);
            a.heading += r.theta;
        }
        for p in &mut out.corridor.centerline {
            *p = r.apply(*p);
        }
        out.goal_progress_axis = r.rotate(self.goal_progress_axis);
        out
    }

    pub fn horizon(&self) -> usize {
        self.expert.len()
    }
}

/// Builds a scene deterministically from `(seed, difficulty)`.
///
/// Routine scenes have at most one far agent that never interferes with the
/// nominal profile. Interactive scenes place 2-4 lead, crossing or merging
/// agents that make the nominal profile fail, so the expert has to change
/// speed or shift laterally. Draws are retried until an expert with all
/// sub-metrics at 1.0 exists.
pub fn generate_scene(seed: u64, difficulty: Difficulty) -> Result<Scene> {
    let salt = match difficulty {
        Difficulty::Routine => 0x5eed_0001,
        Difficulty::Interactive => 0x5eed_0002,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(scene) = attempt(&mut rng, seed, difficulty)? {
            return Ok(scene);
        }
    }
    Err(Error::Generation { seed, attempts: MAX_ATTEMPTS })
}

struct Road {
    line: Vec<[f64; 2]>,
    /// arclength of the ego's foot point
    s0: f64,
    l0: f64,
    half_width: f64,
}

impl Road {
    fn sample(rng: &mut ChaCha8Rng) -> Road {
        let half_width = rng.random_range(2.25..3.0);
        let kappa0 = rng.random_range(-0.01..0.01);
        let dkappa = rng.random_range(-1e-4..1e-4);
        let l0: f64 = rng.random_range(-0.4..0.4);
        let theta0: f64 = rng.random_range(-0.04..0.04);
        let theta = |s: f64| theta0 + kappa0 * s + 0.5 * dkappa * s * s;
        // foot point such that the ego (origin) sits at lateral offset l0
        let start = [l0 * theta0.sin(), -l0 * theta0.cos()];
        let mut fwd = vec![start];
        let mut p = start;
        let step = 1.0;
        let mut s = 0.0;
        while s < CENTERLINE_AHEAD {
            let th = theta(s + 0.5 * step);
            p = [p[0] + step * th.cos(), p[1] + step * th.sin()];
            s += step;
            fwd.push(p);
        }
        let mut back = Vec::new();
        let mut p = start;
        let mut s = 0.0;
        while s > -CENTERLINE_BACK {
            let th = theta(s - 0.5 * step);
            p = [p[0] - step * th.cos(), p[1] - step * th.sin()];
            s -= step;
            back.push(p);
        }
        back.reverse();
        back.extend(fwd);
        Road { line: back, s0: CENTERLINE_BACK, l0, half_width }
    }

    fn at(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        point_at_arclength(&self.line, self.s0 + s)
    }

    fn lateral_point(&self, s: f64, l: f64) -> [f64; 2] {
        let (c, t) = self.at(s);
        [c[0] - l * t[1], c[1] + l * t[0]]
    }

    fn heading(&self, s: f64) -> f64 {
        let (_, t) = self.at(s);
        t[1].atan2(t[0])
    }
}

/// Speed-and-offset profile followed along the road.
#[derive(Debug, Clone, Copy)]
struct Profile {
    accel: f64,
    lateral: f64,
}

fn distance_travelled(v0: f64, a: f64, t: f64) -> f64 {
    let t_sat = if a > 0.0 {
        (MAX_SPEED - v0).max(0.0) / a
    } else if a < 0.0 {
        v0 / -a
    } else {
        f64::INFINITY
    };
    if t <= t_sat {
        v0 * t + 0.5 * a * t * t
    } else {
        v0 * t_sat + 0.5 * a * t_sat * t_sat + (v0 + a * t_sat) * (t - t_sat)
    }
}

fn follow(road: &Road, v0: f64, profile: Profile) -> Result<Trajectory> {
    let n = DEFAULT_WAYPOINTS;
    let horizon = n as f64 * DEFAULT_DT;
    let points = (1..=n)
        .map(|i| {
            let t = i as f64 * DEFAULT_DT;
            let s = distance_travelled(v0, profile.accel, t);
            let ramp = 0.5 * (1.0 - (PI * t / horizon).cos());
            let l = road.l0 + (profile.lateral - road.l0) * ramp;
            road.lateral_point(s, l)
        })
        .collect();
    Trajectory::from_positions(&PositionSequence::new(points)?, DEFAULT_DT)
}

fn passes(scene: &Scene, traj: &Trajectory) -> Result<bool> {
    let m = evaluate_submetrics(scene, traj)?;
    Ok(m.nc == 1.0 && m.dac == 1.0 && m.ttc == 1.0 && m.comf == 1.0)
}

fn sample_routine_agents(rng: &mut ChaCha8Rng, road: &Road, v0: f64) -> Vec<Agent> {
    if rng.random_bool(0.5) {
        return Vec::new();
    }
    let half_extent = rng.random_range(1.0..1.5);
    if rng.random_bool(0.5) {
        // lead vehicle far ahead and pulling away
        let s = rng.random_range(55.0..75.0);
        vec![Agent {
            position: road.lateral_point(s, 0.0),
            heading: road.heading(s),
            speed: v0 + rng.random_range(0.5..3.0),
            half_extent,
        }]
    } else {
        // parked well off the drivable area
        let s = rng.random_range(20.0..60.0);
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let l = side * (road.half_width + rng.random_range(3.5..6.0));
        vec![Agent {
            position: road.lateral_point(s, l),
            heading: road.heading(s),
            speed: 0.0,
            half_extent,
        }]
    }
}

fn sample_interactive_agents(rng: &mut ChaCha8Rng, road: &Road, v0: f64) -> Vec<Agent> {
    let count = rng.random_range(2..=4);
    (0..count)
        .map(|_| {
            let half_extent = rng.random_range(1.0..1.5);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            match rng.random_range(0..3) {
                0 => {
                    let s = rng.random_range(12.0..30.0);
                    Agent {
                        position: road.lateral_point(s, rng.random_range(-0.5..0.5)),
                        heading: road.heading(s),
                        speed: rng.random_range(0.0..(v0 - 3.0).max(0.5)),
                        half_extent,
                    }
                }
                1 => {
                    let s = rng.random_range(12.0..40.0);
                    let t_cross = rng.random_range(1.0..3.5);
                    let speed = rng.random_range(4.0..9.0);
                    let heading = road.heading(s) - side * PI / 2.0;
                    let c = road.lateral_point(s, 0.0);
                    Agent {
                        position: [
                            c[0] - heading.cos() * speed * t_cross,
                            c[1] - heading.sin() * speed * t_cross,
                        ],
                        heading,
                        speed,
                        half_extent,
                    }
                }
                _ => {
                    let s = rng.random_range(5.0..25.0);
                    let l = side * (road.half_width + rng.random_range(1.0..2.5));
                    let forward = rng.random_range(0.4 * v0..0.9 * v0);
                    let inward = rng.random_range(0.8..1.8);
                    Agent {
                        position: road.lateral_point(s, l),
                        heading: road.heading(s) + (-side * inward).atan2(forward),
                        speed: forward.hypot(inward),
                        half_extent,
                    }
                }
            }
        })
        .collect()
}

fn attempt(rng: &mut ChaCha8Rng, seed: u64, difficulty: Difficulty) -> Result<Option<Scene>> {
    let road = Road::sample(rng);
    let v0 = rng.random_range(6.0..12.0);
    let nominal = Profile { accel: rng.random_range(-0.5..1.0), lateral: 0.0 };
    let agents = match difficulty {
        Difficulty::Routine => sample_routine_agents(rng, &road, v0),
        Difficulty::Interactive => sample_interactive_agents(rng, &road, v0),
    };
    let goal = road.at(40.0).0;
    let gn = goal[0].hypot(goal[1]);
    let nominal_traj = follow(&road, v0, nominal)?;
    let mut scene = Scene {
        rng_seed: seed,
        difficulty,
        ego: EgoState { position: [0.0, 0.0], heading: 0.0, speed: v0 },
        agents,
        corridor: Corridor { centerline: road.line.clone(), half_width: road.half_width },
        goal_progress_axis: [goal[0] / gn, goal[1] / gn],
        expert: nominal_traj.clone(),
    };

    let nominal_ok = passes(&scene, &nominal_traj)?;
    let expert = match difficulty {
        Difficulty::Routine => {
            if !nominal_ok {
                return Ok(None);
            }
            nominal_traj
        }
        Difficulty::Interactive => {
            if nominal_ok {
                return Ok(None);
            }
            match best_feasible(&mut scene, &road, v0)? {
                Some(t) => t,
                None => return Ok(None),
            }
        }
    };
    scene.expert = expert;
    if progress(&scene, &scene.expert) < 1.0 {
        return Ok(None);
    }
    let m = evaluate_submetrics(&scene, &scene.expert)?;
    if m != SubMetrics::ones() {
        return Ok(None);
    }
    Ok(Some(scene))
}

/// Highest-progress profile on a grid of accelerations and lateral targets
/// that passes every gate. Ties prefer the smaller lateral shift.
fn best_feasible(scene: &mut Scene, road: &Road, v0: f64) -> Result<Option<Trajectory>> {
    let laterals: [f64; 5] = [0.0, -0.5, 0.5, -1.0, 1.0];
    let mut best: Option<(f64, Trajectory)> = None;
    for li in laterals {
        if li.abs() + 0.2 > road.half_width {
            continue;
        }
        for ai in 0..=20 {
            let accel = -3.0 + 0.25 * ai as f64;
            let traj = follow(road, v0, Profile { accel, lateral: li })?;
            if !passes(scene, &traj)? {
                continue;
            }
            let prog = progress(scene, &traj);
            if best.as_ref().is_none_or(|(b, _)| prog > *b + 1e-9) {
                best = Some((prog, traj));
            }
        }
    }
    Ok(best.map(|(_, t)| t))
}
