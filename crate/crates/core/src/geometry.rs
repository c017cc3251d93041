//! Planar geometry shared by every layer: poses, axis-aligned boxes and
//! oriented rectangles with a separating-axis overlap test.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Planar pose `(x, y, theta)`. Serialized as a three element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

impl From<[f64; 3]> for Pose {
    fn from(v: [f64; 3]) -> Self {
        Pose::new(v[0], v[1], v[2])
    }
}

impl From<Pose> for [f64; 3] {
    fn from(p: Pose) -> Self {
        [p.x, p.y, p.theta]
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Absolute angular difference in `[0, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Aabb {
    pub const fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn from_points(points: &[(f64, f64)]) -> Self {
        let mut b = Aabb::new(f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            b.x_min = b.x_min.min(x);
            b.x_max = b.x_max.max(x);
            b.y_min = b.y_min.min(y);
            b.y_max = b.y_max.max(y);
        }
        b
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= self.x_min - tol && x <= self.x_max + tol && y >= self.y_min - tol && y <= self.y_max + tol
    }

    /// Largest axis gap between two boxes; negative when they overlap on both axes.
    pub fn separation(&self, other: &Aabb) -> f64 {
        let gx = (other.x_min - self.x_max).max(self.x_min - other.x_max);
        let gy = (other.y_min - self.y_max).max(self.y_min - other.y_max);
        gx.max(gy)
    }

    /// Gap on each axis (negative = overlap along that axis).
    pub fn axis_gaps(&self, other: &Aabb) -> (f64, f64) {
        (
            (other.x_min - self.x_max).max(self.x_min - other.x_max),
            (other.y_min - self.y_max).max(self.y_min - other.y_max),
        )
    }

    /// Intersection, `None` when empty (touching boxes yield a degenerate box).
    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let b = Aabb::new(
            self.x_min.max(other.x_min),
            self.x_max.min(other.x_max),
            self.y_min.max(other.y_min),
            self.y_max.min(other.y_max),
        );
        (b.x_min <= b.x_max && b.y_min <= b.y_max).then_some(b)
    }

    pub fn inflate(&self, dx: f64, dy: f64) -> Aabb {
        Aabb::new(self.x_min - dx, self.x_max + dx, self.y_min - dy, self.y_max + dy)
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x_min, self.y_min),
            (self.x_max, self.y_min),
            (self.x_max, self.y_max),
            (self.x_min, self.y_max),
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.x_min.is_finite()
            && self.x_max.is_finite()
            && self.y_min.is_finite()
            && self.y_max.is_finite()
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }
}

/// Rectangle with arbitrary heading, described by its four corners in
/// counter-clockwise order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub corners: [(f64, f64); 4],
}

impl OrientedRect {
    /// Rectangle spanning `[-back, front] x [-half_width, half_width]` in the
    /// body frame of `pose`.
    pub fn from_body(pose: &Pose, back: f64, front: f64, half_width: f64) -> Self {
        let (s, c) = pose.theta.sin_cos();
        let at = |ox: f64, oy: f64| (pose.x + ox * c - oy * s, pose.y + ox * s + oy * c);
        OrientedRect {
            corners: [
                at(-back, -half_width),
                at(front, -half_width),
                at(front, half_width),
                at(-back, half_width),
            ],
        }
    }

    pub fn from_aabb(b: &Aabb) -> Self {
        OrientedRect { corners: b.corners() }
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.corners)
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let e0 = (self.corners[1].0 - self.corners[0].0, self.corners[1].1 - self.corners[0].1);
        let e1 = (self.corners[3].0 - self.corners[0].0, self.corners[3].1 - self.corners[0].1);
        [e0, e1]
    }

    fn project(&self, axis: (f64, f64)) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(x, y) in &self.corners {
            let p = x * axis.0 + y * axis.1;
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }

    /// Largest separation found over the four candidate axes, measured in
    /// metres along the unit axis. Negative means the rectangles overlap;
    /// zero means they touch.
    pub fn sat_separation(&self, other: &OrientedRect) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for axis in self.axes().into_iter().chain(other.axes()) {
            let norm = axis.0.hypot(axis.1);
            if norm == 0.0 {
                continue;
            }
            let unit = (axis.0 / norm, axis.1 / norm);
            let (a0, a1) = self.project(unit);
            let (b0, b1) = other.project(unit);
            best = best.max((b0 - a1).max(a0 - b1));
        }
        best
    }

    /// Closed-overlap test: touching rectangles count as intersecting.
    pub fn intersects(&self, other: &OrientedRect) -> bool {
        self.sat_separation(other) <= 0.0
    }

    /// Euclidean distance between two rectangles (zero when they intersect).
    pub fn distance(&self, other: &OrientedRect) -> f64 {
        if self.intersects(other) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for (a, b) in [(self, other), (other, self)] {
            for &p in &a.corners {
                for e in 0..4 {
                    let q0 = b.corners[e];
                    let q1 = b.corners[(e + 1) % 4];
                    best = best.min(point_segment_distance(p, q0, q1));
                }
            }
        }
        best
    }
}

pub fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let d = (b.0 - a.0, b.1 - a.1);
    let len2 = d.0 * d.0 + d.1 * d.1;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * d.0 + (p.1 - a.1) * d.1) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - t * d.0).hypot(p.1 - a.1 - t * d.1)
}
