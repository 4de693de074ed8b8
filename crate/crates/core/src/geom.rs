//! Planar vectors and orientation-preserving isometries.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::ops::{Add, Mul, Neg, Sub};

/// Tolerance for geometric (length) comparisons.
pub const TOL_GEOM: f64 = 1e-9;
/// Tolerance for angle comparisons.
pub const TOL_ANGLE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn from_angle(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self { x: c, y: s }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3d cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Polar angle in `[0, 2π)`.
    pub fn angle(self) -> f64 {
        let a = self.y.atan2(self.x);
        if a < 0.0 {
            a + TAU
        } else {
            a
        }
    }

    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, a: f64) -> Vec2 {
        let (s, c) = a.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Counterclockwise angle from `from` to `to`, in `[0, 2π)`.
pub fn ccw_angle(from: Vec2, to: Vec2) -> f64 {
    let a = from.cross(to).atan2(from.dot(to));
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

/// Reduce `x` into `[0, m)`.
pub fn wrap(x: f64, m: f64) -> f64 {
    let r = x.rem_euclid(m);
    if r >= m {
        0.0
    } else {
        r
    }
}

/// Orientation-preserving planar isometry `p ↦ R(p) + t`, with the rotation
/// stored as a unit complex number `(c, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    pub c: f64,
    pub s: f64,
    pub t: Vec2,
}

impl Default for Isometry {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Isometry {
    pub const IDENTITY: Isometry = Isometry {
        c: 1.0,
        s: 0.0,
        t: Vec2::ZERO,
    };

    pub fn new(angle: f64, t: Vec2) -> Self {
        let (s, c) = angle.sin_cos();
        Self { c, s, t }
    }

    pub fn translation(t: Vec2) -> Self {
        Self {
            c: 1.0,
            s: 0.0,
            t,
        }
    }

    /// The unique isometry sending the directed segment `a0 → a1` onto `b0 → b1`.
    /// The two segments must have equal length.
    pub fn segment_to_segment(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> Self {
        let da = (a1 - a0).normalized();
        let db = (b1 - b0).normalized();
        let c = da.dot(db);
        let s = da.cross(db);
        let n = c.hypot(s);
        let (c, s) = (c / n, s / n);
        let r = Isometry { c, s, t: Vec2::ZERO };
        let t = b0 - r.rotate(a0);
        Isometry { c, s, t }
    }

    #[inline]
    pub fn rotate(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.c * v.x - self.s * v.y, self.s * v.x + self.c * v.y)
    }

    #[inline]
    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.rotate(p) + self.t
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        Isometry {
            c: self.c * other.c - self.s * other.s,
            s: self.s * other.c + self.c * other.s,
            t: self.apply(other.t),
        }
    }

    pub fn inverse(&self) -> Isometry {
        let r = Isometry {
            c: self.c,
            s: -self.s,
            t: Vec2::ZERO,
        };
        Isometry {
            c: self.c,
            s: -self.s,
            t: -r.rotate(self.t),
        }
    }

    pub fn angle(&self) -> f64 {
        self.s.atan2(self.c)
    }

    pub fn is_translation(&self, tol: f64) -> bool {
        (self.c - 1.0).abs() <= tol && self.s.abs() <= tol
    }

    /// Max deviation between the two maps, measured on rotation entries and translation.
    pub fn distance(&self, o: &Isometry) -> f64 {
        (self.c - o.c)
            .abs()
            .max((self.s - o.s).abs())
            .max((self.t - o.t).norm())
    }
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let l2 = d.norm2();
    if l2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / l2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

/// Signed area (positive for counterclockwise vertex order).
pub fn signed_area(vs: &[Vec2]) -> f64 {
    let n = vs.len();
    (0..n).map(|i| vs[i].cross(vs[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Proper intersection test for segments `[a, b]` and `[c, d]`, touching at
/// endpoints excluded.
pub fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let o1 = (b - a).cross(c - a);
    let o2 = (b - a).cross(d - a);
    let o3 = (d - c).cross(a - c);
    let o4 = (d - c).cross(b - c);
    let eps = 1e-12;
    ((o1 > eps && o2 < -eps) || (o1 < -eps && o2 > eps))
        && ((o3 > eps && o4 < -eps) || (o3 < -eps && o4 > eps))
}

/// Strict point-in-triangle test (counterclockwise triangle), with a margin.
pub fn in_triangle(p: Vec2, a: Vec2, b: Vec2, c: Vec2, margin: f64) -> bool {
    let e = |u: Vec2, v: Vec2| (v - u).cross(p - u) / (v - u).norm();
    e(a, b) >= -margin && e(b, c) >= -margin && e(c, a) >= -margin
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn compose_inverse_is_identity() {
        let g = Isometry::new(0.7, Vec2::new(1.5, -2.0));
        let id = g.compose(&g.inverse());
        assert!(id.distance(&Isometry::IDENTITY) < 1e-14);
    }

    #[test]
    fn segment_map_sends_endpoints() {
        let a0 = Vec2::new(0.0, 0.0);
        let a1 = Vec2::new(1.0, 1.0);
        let b0 = Vec2::new(3.0, 2.0);
        let b1 = Vec2::new(3.0 - 2f64.sqrt(), 2.0);
        let g = Isometry::segment_to_segment(a0, a1, b0, b1);
        assert!(g.apply(a0).dist(b0) < 1e-14);
        assert!(g.apply(a1).dist(b1) < 1e-14);
    }

    #[test]
    fn ccw_angle_range() {
        let e = Vec2::new(1.0, 0.0);
        assert!((ccw_angle(e, Vec2::new(0.0, 1.0)) - PI / 2.0).abs() < 1e-15);
        assert!((ccw_angle(e, Vec2::new(0.0, -1.0)) - 1.5 * PI).abs() < 1e-15);
        assert_eq!(ccw_angle(e, e), 0.0);
    }

    #[test]
    fn wrap_stays_in_range() {
        assert_eq!(wrap(-1e-20, 1.0), 0.0);
        assert!((wrap(7.5, 3.0) - 1.5).abs() < 1e-15);
    }
}
