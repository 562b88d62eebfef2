//! Planar primitives shared by the simulator, sensors and baselines.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    /// Counter-clockwise rotation by `angle`.
    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Closed line segment `a -> b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub const fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    /// Parameter `t` along a ray `origin + t * dir` (unit `dir`) at which it
    /// first meets this segment, if any.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let e = self.b - self.a;
        let denom = dir.cross(e);
        let w = self.a - origin;
        if denom.abs() < 1e-15 {
            // Parallel. Collinear overlap is reported at the nearest endpoint.
            if w.cross(dir).abs() > 1e-12 {
                return None;
            }
            let ta = w.dot(dir);
            let tb = (self.b - origin).dot(dir);
            let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
            if hi < 0.0 {
                return None;
            }
            return Some(lo.max(0.0));
        }
        let t = w.cross(e) / denom;
        let u = w.cross(dir) / denom;
        if t >= 0.0 && (0.0..=1.0).contains(&u) {
            Some(t)
        } else {
            None
        }
    }
}

/// Oriented rectangle described by its center, heading and full extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl Rect {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self { center, heading, length, width }
    }

    fn axes(&self) -> (Vec2, Vec2) {
        let (s, c) = self.heading.sin_cos();
        (Vec2::new(c, s), Vec2::new(-s, c))
    }

    /// Corners in counter-clockwise order starting at front-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let (u, v) = self.axes();
        let hl = u.scale(self.length / 2.0);
        let hw = v.scale(self.width / 2.0);
        let c = self.center;
        [c + hl + hw, c - hl + hw, c - hl - hw, c + hl - hw]
    }

    pub fn edges(&self) -> [Segment; 4] {
        let k = self.corners();
        [
            Segment::new(k[0], k[1]),
            Segment::new(k[1], k[2]),
            Segment::new(k[2], k[3]),
            Segment::new(k[3], k[0]),
        ]
    }

    pub fn bounding_radius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }

    /// Separating-axis overlap test. Rectangles that merely touch do not overlap.
    pub fn overlaps(&self, other: &Rect) -> bool {
        let d = other.center - self.center;
        let r = self.bounding_radius() + other.bounding_radius();
        if d.dot(d) >= r * r {
            return false;
        }
        let (u1, v1) = self.axes();
        let (u2, v2) = other.axes();
        let (a1, b1) = (self.length / 2.0, self.width / 2.0);
        let (a2, b2) = (other.length / 2.0, other.width / 2.0);
        for axis in [u1, v1, u2, v2] {
            let r1 = a1 * u1.dot(axis).abs() + b1 * v1.dot(axis).abs();
            let r2 = a2 * u2.dot(axis).abs() + b2 * v2.dot(axis).abs();
            if d.dot(axis).abs() >= r1 + r2 - 1e-9 {
                return false;
            }
        }
        true
    }

    /// Distance along the ray to the first boundary point, if hit. Slab test
    /// in the rectangle's own frame; exact under reflection of the scene.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let o = (origin - self.center).rotate(-self.heading);
        let d = dir.rotate(-self.heading);
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for (oc, dc, h) in [(o.x, d.x, self.length / 2.0), (o.y, d.y, self.width / 2.0)] {
            if dc == 0.0 {
                if oc.abs() > h {
                    return None;
                }
            } else {
                let a = (-h - oc) / dc;
                let b = (h - oc) / dc;
                t_near = t_near.max(a.min(b));
                t_far = t_far.min(a.max(b));
            }
        }
        if t_far < t_near || t_far < 0.0 {
            None
        } else {
            Some(t_near.max(0.0))
        }
    }

    /// Lateral extent `(min_y, max_y)` of the rectangle.
    pub fn y_extent(&self) -> (f64, f64) {
        let k = self.corners();
        k.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.y), hi.max(p.y))
        })
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}
