//! Fixed-length ego-frame scene features.
//!
//! Layout of the `FEATURE_DIM = 32` vector:
//!
//! | index  | content                                                        |
//! |--------|----------------------------------------------------------------|
//! | 0      | ego speed / 10                                                 |
//! | 1..7   | centerline lateral offset (ego frame, / 10) at 0,10,..,50 m     |
//! | 7      | corridor half-width / 3                                        |
//! | 8..32  | 4 agent slots, nearest first: x/20, y/20, vx/10, vy/10, extent/2, present |
//!
//! Missing agents leave their slot at zero.

use super::geometry::{point_at_arclength, project_onto_polyline, rotate, to_local, norm, sub};
use super::Scene;

pub const AGENT_SLOTS: usize = 4;
const AGENT_FEATURES: usize = 6;
const CORRIDOR_SAMPLES: usize = 6;
const CORRIDOR_SPACING: f64 = 10.0;
pub const FEATURE_DIM: usize = 1 + CORRIDOR_SAMPLES + 1 + AGENT_SLOTS * AGENT_FEATURES;

pub fn encode_scene(scene: &Scene) -> Vec<f64> {
    let ego = &scene.ego;
    let mut z = Vec::with_capacity(FEATURE_DIM);
    z.push(ego.speed / 10.0);

    let line = &scene.corridor.centerline;
    let (_, s_ego) = project_onto_polyline(line, ego.position);
    for k in 0..CORRIDOR_SAMPLES {
        let (c, _) = point_at_arclength(line, s_ego + k as f64 * CORRIDOR_SPACING);
        z.push(to_local(c, ego.position, ego.heading)[1] / 10.0);
    }
    z.push(scene.corridor.half_width / 3.0);

    let mut agents: Vec<_> = scene
        .agents
        .iter()
        .map(|a| (norm(sub(a.position, ego.position)), a))
        .collect();
    agents.sort_by(|a, b| a.0.total_cmp(&b.0));
    for slot in 0..AGENT_SLOTS {
        match agents.get(slot) {
            Some((_, a)) => {
                let p = to_local(a.position, ego.position, ego.heading);
                let v = rotate(a.velocity(), -ego.heading);
                z.extend([p[0] / 20.0, p[1] / 20.0, v[0] / 10.0, v[1] / 10.0, a.half_extent / 2.0, 1.0]);
            }
            None => z.extend([0.0; AGENT_FEATURES]),
        }
    }
    debug_assert_eq!(z.len(), FEATURE_DIM);
    z
}
