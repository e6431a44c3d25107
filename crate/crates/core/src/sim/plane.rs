//! Floor-plan geometry: wall segments, convex obstacles and ray queries.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;

/// Tolerance used for "strictly inside" tests so that paths may graze
/// obstacle boundaries.
pub const CONTACT_EPS: f64 = 1e-9;

fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Wall segment, serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl From<[f64; 4]> for Segment {
    fn from(v: [f64; 4]) -> Self {
        Segment::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]))
    }
}

impl From<Segment> for [f64; 4] {
    fn from(s: Segment) -> Self {
        [s.a.x, s.a.y, s.b.x, s.b.y]
    }
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        self.a + s * (self.b - self.a)
    }

    /// Unit normal to the left of `a → b`.
    pub fn normal(&self) -> Vec2 {
        let d = (self.b - self.a).normalize();
        Vec2::new(-d.y, d.x)
    }

    pub fn distance_to(&self, p: &Vec2) -> f64 {
        let d = self.b - self.a;
        let len2 = d.norm_squared();
        let s = if len2 > 0.0 { ((p - self.a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (p - self.point_at(s)).norm()
    }

    /// Distance along the ray `origin + t·dir` (t ≥ 0) to this segment.
    pub fn ray_hit(&self, origin: &Vec2, dir: &Vec2) -> Option<f64> {
        let e = self.b - self.a;
        let denom = cross(dir, &e);
        if denom.abs() < 1e-15 {
            return None;
        }
        let w = self.a - origin;
        let t = cross(&w, &e) / denom;
        let s = cross(&w, dir) / denom;
        (t >= 0.0 && (0.0..=1.0).contains(&s)).then_some(t)
    }

    /// Whether the closed segment `p → q` touches this segment.
    pub fn intersects(&self, p: &Vec2, q: &Vec2) -> bool {
        let d = q - p;
        let e = self.b - self.a;
        let denom = cross(&d, &e);
        let w = self.a - p;
        if denom.abs() < 1e-15 {
            // Parallel: only collinear overlap counts.
            if cross(&w, &d).abs() > 1e-12 {
                return false;
            }
            let len2 = d.norm_squared();
            if len2 == 0.0 {
                return self.distance_to(p) < 1e-12;
            }
            let s0 = (self.a - p).dot(&d) / len2;
            let s1 = (self.b - p).dot(&d) / len2;
            return s0.min(s1) <= 1.0 && s0.max(s1) >= 0.0;
        }
        let t = cross(&w, &e) / denom;
        let s = cross(&w, &d) / denom;
        (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    fn overlaps(&self, other: &Bounds) -> bool {
        self.min[0] <= other.max[0]
            && other.min[0] <= self.max[0]
            && self.min[1] <= other.max[1]
            && other.min[1] <= self.max[1]
    }

    fn of_points<'a>(pts: impl IntoIterator<Item = &'a Vec2>) -> Self {
        let mut b = Bounds { min: [f64::INFINITY; 2], max: [f64::NEG_INFINITY; 2] };
        for p in pts {
            b.min[0] = b.min[0].min(p.x);
            b.min[1] = b.min[1].min(p.y);
            b.max[0] = b.max[0].max(p.x);
            b.max[1] = b.max[1].max(p.y);
        }
        b
    }
}

/// Counter-clockwise convex polygon stored as half-planes `n·x ≤ c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    pub vertices: Vec<Vec2>,
    normals: Vec<Vec2>,
    offsets: Vec<f64>,
    bbox: Bounds,
}

impl ConvexPolygon {
    /// Convex hull of `points`.
    pub fn hull(points: &[Vec2]) -> Self {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
        let mut hull: Vec<Vec2> = Vec::with_capacity(pts.len() + 1);
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &Vec2>> =
                if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
            for p in iter {
                while hull.len() >= start + 2 {
                    let a = hull[hull.len() - 2];
                    let b = hull[hull.len() - 1];
                    if cross(&(b - a), &(p - a)) <= 1e-12 {
                        hull.pop();
                    } else {
                        break;
                    }
                }
                hull.push(*p);
            }
            hull.pop();
        }
        Self::from_ccw(hull)
    }

    fn from_ccw(vertices: Vec<Vec2>) -> Self {
        let k = vertices.len();
        let mut normals = Vec::with_capacity(k);
        let mut offsets = Vec::with_capacity(k);
        for i in 0..k {
            let a = vertices[i];
            let b = vertices[(i + 1) % k];
            let e = (b - a).normalize();
            let n = Vec2::new(e.y, -e.x);
            normals.push(n);
            offsets.push(n.dot(&a));
        }
        let bbox = Bounds::of_points(&vertices);
        Self { vertices, normals, offsets, bbox }
    }

    /// Segment `a → b` swept by a regular octagon of apothem `radius`, so
    /// every boundary point is at least `radius` from the segment.
    pub fn inflated_segment(seg: &Segment, radius: f64) -> Self {
        let circ = radius / (std::f64::consts::PI / 8.0).cos();
        let mut pts = Vec::with_capacity(16);
        for end in [seg.a, seg.b] {
            for k in 0..8 {
                let ang = std::f64::consts::PI / 8.0 + k as f64 * std::f64::consts::FRAC_PI_4;
                pts.push(end + circ * Vec2::new(ang.cos(), ang.sin()));
            }
        }
        Self::hull(&pts)
    }

    pub fn bbox(&self) -> &Bounds {
        &self.bbox
    }

    /// Signed clearance: negative inside, the largest half-plane violation.
    pub fn signed_depth(&self, p: &Vec2) -> f64 {
        self.normals.iter().zip(&self.offsets).map(|(n, c)| n.dot(p) - c).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains_strict(&self, p: &Vec2) -> bool {
        self.signed_depth(p) < -CONTACT_EPS
    }

    /// Parameter range of `p + t(q - p)`, t ∈ [0, 1], strictly inside the polygon.
    fn clip(&self, p: &Vec2, q: &Vec2) -> Option<(f64, f64)> {
        let d = q - p;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for (n, c) in self.normals.iter().zip(&self.offsets) {
            // n·(p + t d) < c - eps
            let num = c - CONTACT_EPS - n.dot(p);
            let den = n.dot(&d);
            if den.abs() < 1e-15 {
                if num <= 0.0 {
                    return None;
                }
            } else if den > 0.0 {
                hi = hi.min(num / den);
            } else {
                lo = lo.max(num / den);
            }
            if lo >= hi {
                return None;
            }
        }
        Some((lo, hi))
    }

    /// Whether the open segment `p → q` passes through the interior.
    pub fn crosses_interior(&self, p: &Vec2, q: &Vec2) -> bool {
        let seg_box = Bounds::of_points([p, q]);
        if !self.bbox.overlaps(&seg_box) {
            return false;
        }
        self.clip(p, q).is_some_and(|(lo, hi)| hi - lo > 1e-12)
    }

    /// First parameter t ∈ [0, 1] at which `p + t(q - p)` enters the
    /// polygon, for a start point outside it.
    pub fn entry(&self, p: &Vec2, q: &Vec2) -> Option<f64> {
        let seg_box = Bounds::of_points([p, q]);
        if !self.bbox.overlaps(&seg_box) {
            return None;
        }
        let d = q - p;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for (n, c) in self.normals.iter().zip(&self.offsets) {
            let num = c - n.dot(p);
            let den = n.dot(&d);
            if den.abs() < 1e-15 {
                if num < 0.0 {
                    return None;
                }
            } else if den > 0.0 {
                hi = hi.min(num / den);
            } else {
                lo = lo.max(num / den);
            }
            if lo > hi {
                return None;
            }
        }
        // Touching without penetrating is not an entry.
        (hi - lo > 1e-12).then_some(lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_hits_segment() {
        let s = Segment::new(Vec2::new(2.0, -1.0), Vec2::new(2.0, 1.0));
        assert_eq!(s.ray_hit(&Vec2::zeros(), &Vec2::new(1.0, 0.0)), Some(2.0));
        assert_eq!(s.ray_hit(&Vec2::zeros(), &Vec2::new(-1.0, 0.0)), None);
        assert_eq!(s.ray_hit(&Vec2::zeros(), &Vec2::new(0.0, 1.0)), None);
    }

    #[test]
    fn segment_intersection_cases() {
        let s = Segment::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        assert!(s.intersects(&Vec2::new(0.5, -1.0), &Vec2::new(0.5, 1.0)));
        assert!(!s.intersects(&Vec2::new(1.5, -1.0), &Vec2::new(1.5, 1.0)));
        assert!(s.intersects(&Vec2::new(0.5, 0.0), &Vec2::new(2.0, 0.0)));
        assert!(!s.intersects(&Vec2::new(0.0, 1.0), &Vec2::new(1.0, 1.0)));
    }

    #[test]
    fn inflated_segment_keeps_clearance() {
        let seg = Segment::new(Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0));
        let poly = ConvexPolygon::inflated_segment(&seg, 0.2);
        assert!(poly.contains_strict(&Vec2::new(1.0, 0.19)));
        assert!(!poly.contains_strict(&Vec2::new(1.0, 0.21)));
        assert!(poly.contains_strict(&Vec2::new(-0.19, 0.0)));
        for v in &poly.vertices {
            assert!(seg.distance_to(v) >= 0.2 - 1e-12);
        }
    }

    #[test]
    fn crossing_and_entry() {
        let poly = ConvexPolygon::hull(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ]);
        assert!(poly.crosses_interior(&Vec2::new(-1.0, 0.5), &Vec2::new(2.0, 0.5)));
        // Running along an edge or touching a corner is allowed.
        assert!(!poly.crosses_interior(&Vec2::new(-1.0, 0.0), &Vec2::new(2.0, 0.0)));
        assert!(!poly.crosses_interior(&Vec2::new(1.0, 1.0), &Vec2::new(2.0, 2.0)));
        let t = poly.entry(&Vec2::new(-1.0, 0.5), &Vec2::new(1.0, 0.5)).unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        assert!(poly.entry(&Vec2::new(-1.0, 2.0), &Vec2::new(2.0, 2.0)).is_none());
    }
}
