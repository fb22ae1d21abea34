//! Static SVG rendering of a scene and its decision.

use std::fmt::Write as _;
use std::path::Path;

use crate::decision::CandidateSet;
use crate::error::Result;
use crate::io::write_atomic;
use crate::scene::metrics::world_poses;
use crate::scene::Scene;
use crate::traj::Trajectory;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 20.0;

pub const EXPERT_COLOR: &str = "#1a9850";
pub const VOCAB_COLOR: &str = "#d73027";
pub const REFINED_COLOR: &str = "#4575b4";

struct View {
    min: [f64; 2],
    scale: f64,
}

impl View {
    fn fit(points: &[[f64; 2]]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        if !lo[0].is_finite() {
            return Self { min: [0.0, 0.0], scale: 1.0 };
        }
        let span = [(hi[0] - lo[0]).max(1.0), (hi[1] - lo[1]).max(1.0)];
        let scale = ((WIDTH - 2.0 * MARGIN) / span[0]).min((HEIGHT - 2.0 * MARGIN) / span[1]);
        Self { min: lo, scale }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (MARGIN + (p[0] - self.min[0]) * self.scale, HEIGHT - MARGIN - (p[1] - self.min[1]) * self.scale)
    }

    fn path(&self, points: &[[f64; 2]]) -> String {
        let mut s = String::new();
        for (i, p) in points.iter().enumerate() {
            let (x, y) = self.map(*p);
            let _ = write!(s, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { " L" });
        }
        s
    }
}

fn offset_line(line: &[[f64; 2]], d: f64) -> Vec<[f64; 2]> {
    (0..line.len())
        .map(|i| {
            let a = line[i.saturating_sub(1)];
            let b = line[(i + 1).min(line.len() - 1)];
            let t = [b[0] - a[0], b[1] - a[1]];
            let n = t[0].hypot(t[1]).max(1e-12);
            [line[i][0] - d * t[1] / n, line[i][1] + d * t[0] / n]
        })
        .collect()
}

fn traj_points(scene: &Scene, t: &Trajectory) -> Vec<[f64; 2]> {
    std::iter::once(scene.ego.position).chain(world_poses(scene, t).into_iter().map(|(p, _)| p)).collect()
}

/// Anchor index paired with a decided candidate index.
fn paired_anchor(set: &CandidateSet, decided: usize) -> usize {
    let k = set.vocab_candidates.len();
    if decided < k { decided } else { decided - k }
}

/// Renders the corridor, agents at t = 0, the expert in green, and for a
/// decision the selected vocabulary anchor in red with its refined
/// counterpart in blue.
pub fn render_svg(scene: &Scene, set: Option<&CandidateSet>, decided: Option<usize>) -> String {
    let left = offset_line(&scene.corridor.centerline, scene.corridor.half_width);
    let right = offset_line(&scene.corridor.centerline, -scene.corridor.half_width);
    let expert = traj_points(scene, &scene.expert);
    let mut highlighted: Vec<(&str, Vec<[f64; 2]>)> = Vec::new();
    if let (Some(set), Some(i)) = (set, decided) {
        if i < set.len() {
            let a = paired_anchor(set, i);
            if let Some(v) = set.vocab_candidates.get(a) {
                highlighted.push((VOCAB_COLOR, traj_points(scene, v)));
            }
            if let Some(d) = set.diffusion_candidates.get(a) {
                highlighted.push((REFINED_COLOR, traj_points(scene, d)));
            }
        }
    }
    let mut extent: Vec<[f64; 2]> = expert.clone();
    extent.extend(scene.agents.iter().map(|a| a.position));
    for (_, h) in &highlighted {
        extent.extend(h);
    }
    let view = View::fit(&extent);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(s, r##"<g id="corridor" fill="none" stroke="#999999" stroke-width="1">"##);
    for line in [&left, &right] {
        let _ = writeln!(s, r#"<path d="{}"/>"#, view.path(line));
    }
    let _ = writeln!(s, r#"<path d="{}" stroke-dasharray="4 4"/>"#, view.path(&scene.corridor.centerline));
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g id="agents" fill="#bbbbbb" stroke="#555555">"##);
    for a in &scene.agents {
        let (x, y) = view.map(a.position);
        let h = a.half_extent * view.scale;
        let deg = -a.heading.to_degrees();
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" transform="rotate({deg:.2} {x:.2} {y:.2})"/>"#,
            x - h,
            y - h,
            2.0 * h,
            2.0 * h
        );
    }
    let _ = writeln!(s, "</g>");
    let (ex, ey) = view.map(scene.ego.position);
    let _ = writeln!(s, r##"<circle id="ego" cx="{ex:.2}" cy="{ey:.2}" r="4" fill="#000000"/>"##);
    let _ = writeln!(s, r#"<path id="expert" d="{}" fill="none" stroke="{EXPERT_COLOR}" stroke-width="3"/>"#, view.path(&expert));
    for (color, pts) in &highlighted {
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, view.path(pts));
    }
    s.push_str("</svg>\n");
    s
}

pub fn plot_scene(scene: &Scene, set: Option<&CandidateSet>, decided: Option<usize>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), render_svg(scene, set, decided).as_bytes())
}
