//! Planar geometry helpers: rigid transforms, oriented boxes, polylines.

use serde::{Deserialize, Serialize};

/// A rigid planar motion: rotate by `theta`, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rigid2 {
    pub tx: f64,
    pub ty: f64,
    pub theta: f64,
}

impl Rigid2 {
    pub fn new(tx: f64, ty: f64, theta: f64) -> Self {
        Self { tx, ty, theta }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * p[0] - s * p[1] + self.tx, s * p[0] + c * p[1] + self.ty]
    }

    pub fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        rotate(v, self.theta)
    }
}

pub fn rotate(v: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

pub fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Expresses world point `p` in the frame of a pose at `origin` facing `heading`.
pub fn to_local(p: [f64; 2], origin: [f64; 2], heading: f64) -> [f64; 2] {
    rotate(sub(p, origin), -heading)
}

/// Oriented rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: [f64; 2],
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Obb {
    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    fn radius_along(&self, axis: [f64; 2]) -> f64 {
        let [u, v] = self.axes();
        self.half_length * dot(u, axis).abs() + self.half_width * dot(v, axis).abs()
    }

    /// Separating-axis overlap test; touching boxes do not overlap.
    pub fn overlaps(&self, other: &Obb) -> bool {
        let d = sub(other.center, self.center);
        let [a0, a1] = self.axes();
        let [b0, b1] = other.axes();
        [a0, a1, b0, b1]
            .into_iter()
            .all(|axis| dot(d, axis).abs() < self.radius_along(axis) + other.radius_along(axis))
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let l = to_local(p, self.center, self.heading);
        l[0].abs() <= self.half_length && l[1].abs() <= self.half_width
    }
}

/// Signed lateral offset of `p` from a polyline (left of travel is
/// positive), with the arclength of the foot point.
pub fn project_onto_polyline(line: &[[f64; 2]], p: [f64; 2]) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut s_acc = 0.0;
    for w in line.windows(2) {
        let seg = sub(w[1], w[0]);
        let len2 = dot(seg, seg);
        let len = len2.sqrt();
        let t = if len2 > 0.0 {
            (dot(sub(p, w[0]), seg) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let foot = [w[0][0] + t * seg[0], w[0][1] + t * seg[1]];
        let off = sub(p, foot);
        let dist = norm(off);
        if dist < best.0 {
            let cross = seg[0] * off[1] - seg[1] * off[0];
            let sign = if cross >= 0.0 { 1.0 } else { -1.0 };
            best = (dist, sign * dist, s_acc + t * len);
        }
        s_acc += len;
    }
    (best.1, best.2)
}

/// Point and unit tangent at arclength `s` along a polyline, extrapolated
/// linearly past either end.
pub fn point_at_arclength(line: &[[f64; 2]], s: f64) -> ([f64; 2], [f64; 2]) {
    let segments = line.len().saturating_sub(1);
    let mut acc = 0.0;
    for (i, w) in line.windows(2).enumerate() {
        let seg = sub(w[1], w[0]);
        let len = norm(seg);
        if len == 0.0 {
            continue;
        }
        let tangent = [seg[0] / len, seg[1] / len];
        if s <= acc + len || i + 1 == segments {
            let t = s - acc;
            return ([w[0][0] + tangent[0] * t, w[0][1] + tangent[1] * t], tangent);
        }
        acc += len;
    }
    (line.first().copied().unwrap_or([0.0, 0.0]), [1.0, 0.0])
}
