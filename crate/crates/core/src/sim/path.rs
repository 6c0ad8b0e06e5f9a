//! Grid A* planner with obstacle inflation and line-of-sight smoothing.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{point_segment_distance, segments_intersect, Polygon, Pose, Vec2};
use super::world::{Bounds, World};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("no path: {0}")]
    NoPath(String),
    #[error("planner configuration invalid: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PlannerConfig<T> {
    pub resolution: T,
    pub inflation: T,
    /// Added to `inflation` when deciding which cells are free; typically the vehicle half-width.
    pub robot_radius: T,
}

impl<T: Real> Default for PlannerConfig<T> {
    fn default() -> Self {
        PlannerConfig {
            resolution: T::lit(0.25),
            inflation: T::lit(0.5),
            robot_radius: T::zero(),
        }
    }
}

impl<T: Real> PlannerConfig<T> {
    pub fn clearance(&self) -> T {
        self.inflation + self.robot_radius
    }
}

/// Distance between a segment and a polygon, zero when they touch or overlap.
pub fn segment_polygon_distance<T: Real>(a: Vec2<T>, b: Vec2<T>, poly: &Polygon<T>) -> T {
    if poly.contains(a) || poly.contains(b) {
        return T::zero();
    }
    let mut best = T::infinity();
    for (c, d) in poly.edges() {
        if segments_intersect(a, b, c, d) {
            return T::zero();
        }
        best = best
            .min(point_segment_distance(a, c, d))
            .min(point_segment_distance(b, c, d))
            .min(point_segment_distance(c, a, b))
            .min(point_segment_distance(d, a, b));
    }
    best
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    cell: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Grid<T> {
    origin: Vec2<T>,
    res: T,
    nx: usize,
    ny: usize,
    free: Vec<bool>,
}

impl<T: Real> Grid<T> {
    fn build(bounds: &Bounds<T>, obstacles: &[&Polygon<T>], res: T, clearance: T) -> Self {
        let nx = (bounds.width() / res).ceil().as_f64().max(1.0) as usize;
        let ny = (bounds.height() / res).ceil().as_f64().max(1.0) as usize;
        let mut grid = Grid {
            origin: bounds.min,
            res,
            nx,
            ny,
            free: vec![true; nx * ny],
        };
        for j in 0..ny {
            for i in 0..nx {
                let c = grid.center(i, j);
                grid.free[j * nx + i] = obstacles.iter().all(|p| p.distance_to(c) >= clearance);
            }
        }
        grid
    }

    fn center(&self, i: usize, j: usize) -> Vec2<T> {
        let half = T::lit(0.5);
        Vec2::new(
            self.origin.x + (T::lit(i as f64) + half) * self.res,
            self.origin.y + (T::lit(j as f64) + half) * self.res,
        )
    }

    fn cell_of(&self, p: Vec2<T>) -> usize {
        let clamp = |v: T, n: usize| (v.as_f64().floor().max(0.0) as usize).min(n - 1);
        let i = clamp((p.x - self.origin.x) / self.res, self.nx);
        let j = clamp((p.y - self.origin.y) / self.res, self.ny);
        j * self.nx + i
    }

    fn astar(&self, start: usize, goal: usize) -> Option<Vec<usize>> {
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let xy = |c: usize| ((c % self.nx) as i64, (c / self.nx) as i64);
        let (gx, gy) = xy(goal);
        let h = |c: usize| {
            let (x, y) = xy(c);
            let (dx, dy) = ((x - gx).abs() as f64, (y - gy).abs() as f64);
            dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)
        };
        let passable = |c: usize| self.free[c] || c == start || c == goal;
        let mut g = vec![f64::INFINITY; self.free.len()];
        let mut parent = vec![usize::MAX; self.free.len()];
        let mut heap = BinaryHeap::new();
        g[start] = 0.0;
        heap.push(Open { f: h(start), g: 0.0, cell: start });
        while let Some(Open { g: gc, cell, .. }) = heap.pop() {
            if cell == goal {
                let mut out = vec![goal];
                let mut c = goal;
                while c != start {
                    c = parent[c];
                    out.push(c);
                }
                out.reverse();
                return Some(out);
            }
            if gc > g[cell] {
                continue;
            }
            let (x, y) = xy(cell);
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let (x2, y2) = (x + dx, y + dy);
                if x2 < 0 || y2 < 0 || x2 >= nx || y2 >= ny {
                    continue;
                }
                let n = (y2 * nx + x2) as usize;
                if !passable(n) {
                    continue;
                }
                let step = if dx != 0 && dy != 0 {
                    // no corner cutting past blocked cells
                    let side_a = (y * nx + x2) as usize;
                    let side_b = (y2 * nx + x) as usize;
                    if !passable(side_a) || !passable(side_b) {
                        continue;
                    }
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                let cand = gc + step;
                if cand < g[n] {
                    g[n] = cand;
                    parent[n] = cell;
                    heap.push(Open { f: cand + h(n), g: cand, cell: n });
                }
            }
        }
        None
    }
}

/// Plans around every obstacle in the world.
pub fn plan_path<T: Real>(world: &World<T>, from: &Pose<T>, to: &Pose<T>, config: &PlannerConfig<T>) -> Result<Vec<Pose<T>>, PathError> {
    let polys: Vec<&Polygon<T>> = world.obstacles.iter().map(|o| &o.polygon).collect();
    plan_path_among(&world.bounds, &polys, from, to, config)
}

/// Plans around an explicit obstacle set, e.g. only the prior-map obstacles.
pub fn plan_path_among<T: Real>(
    bounds: &Bounds<T>,
    obstacles: &[&Polygon<T>],
    from: &Pose<T>,
    to: &Pose<T>,
    config: &PlannerConfig<T>,
) -> Result<Vec<Pose<T>>, PathError> {
    if config.resolution.is_nan() || config.resolution <= T::zero() || config.inflation < T::zero() || config.robot_radius < T::zero() {
        return Err(PathError::Config("resolution must be positive and radii non-negative".into()));
    }
    let (start, goal) = (from.position(), to.position());
    if !bounds.contains(start) || !bounds.contains(goal) {
        return Err(PathError::NoPath("endpoint outside map bounds".into()));
    }
    let clearance = config.clearance();
    let clear_point = |p: Vec2<T>| obstacles.iter().all(|o| o.distance_to(p) >= clearance);
    let clear_segment = |a: Vec2<T>, b: Vec2<T>| obstacles.iter().all(|o| segment_polygon_distance(a, b, o) >= clearance);
    if !clear_point(goal) {
        return Err(PathError::NoPath("goal lies within obstacle inflation".into()));
    }
    if !clear_point(start) {
        return Err(PathError::NoPath("start lies within obstacle inflation".into()));
    }

    let mut raw = vec![start];
    if !clear_segment(start, goal) {
        let grid = Grid::build(bounds, obstacles, config.resolution, clearance);
        let (s, g) = (grid.cell_of(start), grid.cell_of(goal));
        let cells = grid
            .astar(s, g)
            .ok_or_else(|| PathError::NoPath("goal unreachable under inflation".into()))?;
        let inner = cells.len().saturating_sub(1);
        raw.extend(cells[1.min(inner)..inner].iter().map(|&c| grid.center(c % grid.nx, c / grid.nx)));
    }
    raw.push(goal);

    let mut smooth = vec![raw[0]];
    let mut i = 0;
    while i + 1 < raw.len() {
        let mut j = raw.len() - 1;
        while j > i + 1 && !clear_segment(raw[i], raw[j]) {
            j -= 1;
        }
        smooth.push(raw[j]);
        i = j;
    }
    smooth.dedup_by(|b, a| a.dist(*b) == T::zero());
    if smooth.len() == 1 {
        smooth.push(goal);
    }

    let n = smooth.len();
    Ok(smooth
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if k == 0 {
                *from
            } else if k == n - 1 {
                *to
            } else {
                let d = smooth[k + 1] - *p;
                Pose::new(p.x, p.y, d.y.atan2(d.x))
            }
        })
        .collect())
}

/// Total polyline length.
pub fn path_length<T: Real>(path: &[Pose<T>]) -> T {
    path.windows(2).fold(T::zero(), |acc, w| acc + w[0].distance_to(&w[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::world::{Obstacle, VehicleState};

    fn world() -> World<f64> {
        World::new(VehicleState::new(Pose::new(1.0, 1.0, 0.0), 2.8, 8.0, 0.6), Pose::new(50.0, 1.0, 0.0))
    }

    #[test]
    fn straight_line_when_clear() {
        let w = world();
        let from = Pose::new(2.0, 3.0, 0.0);
        let to = Pose::new(40.0, 3.0, 0.0);
        let p = plan_path(&w, &from, &to, &PlannerConfig::default()).unwrap();
        assert_eq!(p.first().unwrap(), &from);
        assert_eq!(p.last().unwrap(), &to);
        assert!(p.windows(2).all(|w| w[1].x > w[0].x));
    }

    #[test]
    fn goal_inside_obstacle_has_no_path() {
        let w = world().with_obstacle(Obstacle::new("b", "box", Polygon::rect(Vec2::new(20.0, 2.0), Vec2::new(24.0, 4.0))));
        let r = plan_path(&w, &Pose::new(2.0, 3.0, 0.0), &Pose::new(22.0, 3.0, 0.0), &PlannerConfig::default());
        assert!(matches!(r, Err(PathError::NoPath(_))));
    }

    #[test]
    fn segment_distance_cases() {
        let sq = Polygon::<f64>::rect(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        assert_eq!(segment_polygon_distance(Vec2::new(-1.0, 0.5), Vec2::new(2.0, 0.5), &sq), 0.0);
        assert!((segment_polygon_distance(Vec2::new(-1.0, 2.0), Vec2::new(2.0, 2.0), &sq) - 1.0).abs() < 1e-12);
    }
}
