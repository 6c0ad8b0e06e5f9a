//! Planar geometry over any [`Real`] scalar.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: T) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Rotates counter-clockwise by `theta`.
    pub fn rotate(self, theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn cast<U: Real>(self) -> Vec2<U> {
        Vec2::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Maps an angle into (−π, π].
pub fn normalize_angle<T: Real>(theta: T) -> T {
    let pi = T::pi();
    let two_pi = pi + pi;
    let mut a = theta % two_pi;
    if a <= -pi {
        a = a + two_pi;
    } else if a > pi {
        a = a - two_pi;
    }
    a
}

/// Position plus heading in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Pose<T> {
    pub x: T,
    pub y: T,
    pub heading: T,
}

impl<T: Real> Pose<T> {
    pub fn new(x: T, y: T, heading: T) -> Self {
        Pose {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    pub fn distance_to(&self, o: &Pose<T>) -> T {
        self.position().dist(o.position())
    }

    /// World coordinates of a point given in this pose's frame.
    pub fn transform(&self, local: Vec2<T>) -> Vec2<T> {
        self.position() + local.rotate(self.heading)
    }

    /// This pose's frame coordinates of a world point.
    pub fn to_local(&self, world: Vec2<T>) -> Vec2<T> {
        (world - self.position()).rotate(-self.heading)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x.as_f64(), self.y.as_f64(), self.heading.as_f64()]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Pose::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]))
    }
}

fn orient<T: Real>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> T {
    (b - a).cross(c - a)
}

fn on_segment<T: Real>(a: Vec2<T>, b: Vec2<T>, p: Vec2<T>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test, collinear overlap included.
pub fn segments_intersect<T: Real>(p1: Vec2<T>, p2: Vec2<T>, q1: Vec2<T>, q2: Vec2<T>) -> bool {
    let zero = T::zero();
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > zero && d2 < zero) || (d1 < zero && d2 > zero)) && ((d3 > zero && d4 < zero) || (d3 < zero && d4 > zero)) {
        return true;
    }
    (d1 == zero && on_segment(q1, q2, p1))
        || (d2 == zero && on_segment(q1, q2, p2))
        || (d3 == zero && on_segment(p1, p2, q1))
        || (d4 == zero && on_segment(p1, p2, q2))
}

pub fn point_segment_distance<T: Real>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> T {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == T::zero() {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).max(T::zero()).min(T::one());
    p.dist(a + ab * t)
}

/// Distance along the ray `origin + t·dir` (unit `dir`) to the segment, if hit.
pub fn ray_segment<T: Real>(origin: Vec2<T>, dir: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> Option<T> {
    let e = b - a;
    let denom = dir.cross(e);
    let w = a - origin;
    let zero = T::zero();
    if denom == zero {
        // parallel: only a collinear segment can be hit, at its nearest endpoint ahead
        if w.cross(dir) != zero {
            return None;
        }
        let ta = w.dot(dir);
        let tb = (b - origin).dot(dir);
        return match (ta >= zero, tb >= zero) {
            (true, true) => Some(ta.min(tb)),
            (false, false) => None,
            _ => Some(zero),
        };
    }
    let t = w.cross(e) / denom;
    let u = w.cross(dir) / denom;
    (t >= zero && u >= zero && u <= T::one()).then_some(t)
}

/// Simple polygon given by its vertices in order (either winding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Polygon<T> {
    pub vertices: Vec<Vec2<T>>,
}

impl<T: Real> Polygon<T> {
    pub fn new(vertices: Vec<Vec2<T>>) -> Self {
        Polygon { vertices }
    }

    /// Axis-aligned rectangle from corner to corner.
    pub fn rect(min: Vec2<T>, max: Vec2<T>) -> Self {
        Polygon::new(vec![min, Vec2::new(max.x, min.y), max, Vec2::new(min.x, max.y)])
    }

    /// Rectangle of the given size placed in `pose`'s frame, spanning
    /// `[back, front]` longitudinally and `±half_width` laterally.
    pub fn oriented_rect(pose: &Pose<T>, back: T, front: T, half_width: T) -> Self {
        let corners = [
            Vec2::new(-back, -half_width),
            Vec2::new(front, -half_width),
            Vec2::new(front, half_width),
            Vec2::new(-back, half_width),
        ];
        Polygon::new(corners.iter().map(|c| pose.transform(*c)).collect())
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2<T>, Vec2<T>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn centroid(&self) -> Vec2<T> {
        let n = T::lit(self.vertices.len() as f64);
        let sum = self.vertices.iter().fold(Vec2::new(T::zero(), T::zero()), |acc, v| acc + *v);
        Vec2::new(sum.x / n, sum.y / n)
    }

    pub fn bounds(&self) -> (Vec2<T>, Vec2<T>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }

    /// Even-odd rule; points on the boundary may go either way.
    pub fn contains(&self, p: Vec2<T>) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Zero inside, otherwise distance to the nearest edge.
    pub fn distance_to(&self, p: Vec2<T>) -> T {
        if self.contains(p) {
            return T::zero();
        }
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(T::infinity(), T::min)
    }

    pub fn intersects(&self, other: &Polygon<T>) -> bool {
        for (a, b) in self.edges() {
            for (c, d) in other.edges() {
                if segments_intersect(a, b, c, d) {
                    return true;
                }
            }
        }
        self.vertices.first().is_some_and(|v| other.contains(*v))
            || other.vertices.first().is_some_and(|v| self.contains(*v))
    }

    /// True when no two non-adjacent edges touch and there are at least three vertices.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return false;
                }
            }
        }
        true
    }

    /// Heading of the longest edge, used as the obstacle's orientation.
    pub fn principal_heading(&self) -> T {
        let (a, b) = self
            .edges()
            .max_by(|(a1, b1), (a2, b2)| a1.dist(*b1).partial_cmp(&a2.dist(*b2)).unwrap_or(std::cmp::Ordering::Equal))
            .expect("polygon has edges");
        let d = b - a;
        let mut h = d.y.atan2(d.x);
        // report the direction in (−π/2, π/2]
        let half = T::pi() / T::lit(2.0);
        if h > half {
            h = h - T::pi();
        } else if h <= -half {
            h = h + T::pi();
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn normalizes_into_half_open_interval() {
        assert_relative_eq!(normalize_angle(3.0 * PI), PI);
        assert_relative_eq!(normalize_angle(-PI), PI);
        assert_relative_eq!(normalize_angle(-3.0 * PI / 2.0), PI / 2.0);
        assert_relative_eq!(normalize_angle(0.25f32), 0.25f32);
    }

    #[test]
    fn ray_hits_square_face() {
        let sq = Polygon::rect(Vec2::new(4.0, -1.0), Vec2::new(6.0, 1.0));
        let hit = sq
            .edges()
            .filter_map(|(a, b)| ray_segment(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), a, b))
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(hit, 4.0);
    }

    #[test]
    fn polygon_relations() {
        let a = Polygon::rect(Vec2::new(0.0, 0.0), Vec2::new(2.0, 2.0));
        let b = Polygon::rect(Vec2::new(1.0, 1.0), Vec2::new(3.0, 3.0));
        let inner = Polygon::rect(Vec2::new(0.5, 0.5), Vec2::new(1.0, 1.0));
        let far = Polygon::rect(Vec2::new(5.0, 5.0), Vec2::new(6.0, 6.0));
        assert!(a.intersects(&b));
        assert!(a.intersects(&inner) && inner.intersects(&a));
        assert!(!a.intersects(&far));
        assert_relative_eq!(a.distance_to(Vec2::new(5.0, 1.0)), 3.0);
        assert_eq!(a.distance_to(Vec2::new(1.0, 1.0)), 0.0);
    }

    #[test]
    fn detects_self_intersection() {
        let bowtie = Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(0.0, 2.0),
        ]);
        assert!(!bowtie.is_simple());
        assert!(Polygon::rect(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)).is_simple());
    }

    #[test]
    fn pose_frames_are_inverse() {
        let p = Pose::new(1.0, 2.0, 0.7);
        let w = Vec2::new(-3.0, 4.5);
        let back = p.transform(p.to_local(w));
        assert_relative_eq!(back.x, w.x, epsilon = 1e-12);
        assert_relative_eq!(back.y, w.y, epsilon = 1e-12);
    }
}
