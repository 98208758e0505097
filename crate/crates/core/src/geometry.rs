//! Planar polyline helpers shared by the map model and the indicators.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Removes consecutive duplicate vertices.
pub fn dedup_vertices(points: &[Vec2]) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::with_capacity(points.len());
    for &p in points {
        if out.last().is_none_or(|&q| q.distance(p) > 1e-9) {
            out.push(p);
        }
    }
    out
}

pub fn cumulative_lengths(points: &[Vec2]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in points.windows(2) {
        acc += w[0].distance(w[1]);
        cum.push(acc);
    }
    cum
}

/// Resamples a polyline to `n` points evenly spaced in arc length, keeping both ends.
pub fn resample(points: &[Vec2], n: usize) -> Vec<Vec2> {
    assert!(points.len() >= 2 && n >= 2);
    let cum = cumulative_lengths(points);
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        if i == n - 1 {
            out.push(*points.last().unwrap());
            break;
        }
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 {
            ((target - cum[seg]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(points[seg].lerp(points[seg + 1], t));
    }
    out
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point from the polyline start. May leave `[0, length]`
    /// when the polyline is extrapolated past its ends.
    pub s: f64,
    /// Signed distance, positive to the left of the direction of travel.
    pub offset: f64,
    pub distance: f64,
}

/// A polyline with precomputed arc lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    cum: Vec<f64>,
}

impl Polyline {
    pub fn new(points: Vec<Vec2>) -> Self {
        assert!(points.len() >= 2, "polyline needs at least two vertices");
        let cum = cumulative_lengths(&points);
        Polyline { points, cum }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    /// Unit tangent at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        let i = self.segment_at(s);
        let d = self.points[i + 1] - self.points[i];
        d * (1.0 / d.norm())
    }

    fn segment_at(&self, s: f64) -> usize {
        match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        }
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let i = self.segment_at(s);
        let span = self.cum[i + 1] - self.cum[i];
        let t = (s - self.cum[i]) / span;
        self.points[i].lerp(self.points[i + 1], t)
    }

    /// Nearest-point projection. With `extrapolate`, the first and last segments are
    /// treated as rays so points before the start or past the end get `s < 0` or
    /// `s > length`.
    pub fn project(&self, p: Vec2, extrapolate: bool) -> Projection {
        self.project_with(p, extrapolate, extrapolate)
    }

    /// Like [`Polyline::project`] with independent control over each end.
    pub fn project_with(&self, p: Vec2, before_start: bool, past_end: bool) -> Projection {
        let last = self.points.len() - 2;
        let mut best: Option<(f64, usize, f64)> = None;
        for i in 0..=last {
            let a = self.points[i];
            let b = self.points[i + 1];
            let d = b - a;
            let len2 = d.dot(d);
            let mut t = (p - a).dot(d) / len2;
            let lo = if before_start && i == 0 { f64::NEG_INFINITY } else { 0.0 };
            let hi = if past_end && i == last { f64::INFINITY } else { 1.0 };
            t = t.clamp(lo, hi);
            let foot = a + d * t;
            let dist = p.distance(foot);
            if best.is_none_or(|(bd, _, _)| dist < bd) {
                best = Some((dist, i, t));
            }
        }
        let (distance, i, t) = best.unwrap();
        let a = self.points[i];
        let d = self.points[i + 1] - a;
        let seg_len = d.norm();
        let side = d.cross(p - a);
        let offset = if side < 0.0 { -distance } else { distance };
        Projection {
            s: self.cum[i] + t * seg_len,
            offset,
            distance,
        }
    }
}

/// Even-odd point-in-polygon test; points on the boundary count as inside.
pub fn point_in_polygon(polygon: &[Vec2], p: Vec2) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[j];
        if on_segment(a, b, p) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    let d = b - a;
    let cross = d.cross(p - a);
    if cross.abs() > 1e-9 * d.norm().max(1.0) {
        return false;
    }
    let t = (p - a).dot(d);
    t >= -1e-12 && t <= d.dot(d) + 1e-12
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Vec2,
    pub max: Vec2,
}

impl BBox {
    pub fn of(points: &[Vec2]) -> BBox {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BBox { min, max }
    }

    pub fn contains(&self, p: Vec2, margin: f64) -> bool {
        p.x >= self.min.x - margin
            && p.x <= self.max.x + margin
            && p.y >= self.min.y - margin
            && p.y <= self.max.y + margin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_keeps_ends_and_spacing() {
        let line = vec![Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(10.0, 0.0)];
        let r = resample(&line, 11);
        assert_eq!(r.len(), 11);
        for (i, p) in r.iter().enumerate() {
            assert!((p.x - i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_sign_and_extrapolation() {
        let pl = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)]);
        let p = pl.project(Vec2::new(4.0, 2.0), false);
        assert_eq!(p.s, 4.0);
        assert_eq!(p.offset, 2.0);
        let q = pl.project(Vec2::new(12.0, -1.0), true);
        assert!((q.s - 12.0).abs() < 1e-12);
        assert_eq!(q.offset, -1.0);
        let c = pl.project(Vec2::new(12.0, -1.0), false);
        assert_eq!(c.s, 10.0);
    }

    #[test]
    fn polygon_boundary_counts_inside() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(point_in_polygon(&sq, Vec2::new(0.5, 0.5)));
        assert!(point_in_polygon(&sq, Vec2::new(1.0, 0.5)));
        assert!(!point_in_polygon(&sq, Vec2::new(1.5, 0.5)));
    }
}
