//! Vehicle kinematics, world state and ray-cast sensing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{normalize_angle, ray_segment, Polygon, Pose, Vec2};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("ego footprint intersects obstacle `{obstacle}` at t = {time:.3} s")]
    Collision { obstacle: String, time: f64 },
    #[error("step size {dt} outside (0, 0.1]")]
    InvalidStep { dt: f64 },
    #[error("invalid control: {0}")]
    InvalidControl(String),
    #[error("world invariant violated: {0}")]
    Invariant(String),
}

fn default_length<T: Real>() -> T {
    T::lit(4.6)
}
fn default_width<T: Real>() -> T {
    T::lit(1.9)
}
fn default_rear_overhang<T: Real>() -> T {
    T::lit(0.9)
}
fn default_max_accel<T: Real>() -> T {
    T::lit(3.0)
}

/// Kinematic bicycle state. The pose is the rear-axle midpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct VehicleState<T> {
    pub pose: Pose<T>,
    pub speed: T,
    pub steering_angle: T,
    pub wheelbase: T,
    pub max_speed: T,
    pub max_steer: T,
    #[serde(default = "default_length")]
    pub length: T,
    #[serde(default = "default_width")]
    pub width: T,
    #[serde(default = "default_rear_overhang")]
    pub rear_overhang: T,
    /// Acceleration produced by full throttle, m/s².
    #[serde(default = "default_max_accel")]
    pub max_accel: T,
}

impl<T: Real> VehicleState<T> {
    pub fn new(pose: Pose<T>, wheelbase: T, max_speed: T, max_steer: T) -> Self {
        VehicleState {
            pose,
            speed: T::zero(),
            steering_angle: T::zero(),
            wheelbase,
            max_speed,
            max_steer,
            length: default_length(),
            width: default_width(),
            rear_overhang: default_rear_overhang(),
            max_accel: default_max_accel(),
        }
    }

    pub fn footprint(&self) -> Polygon<T> {
        self.footprint_at(&self.pose)
    }

    pub fn footprint_at(&self, pose: &Pose<T>) -> Polygon<T> {
        let front = self.length - self.rear_overhang;
        Polygon::oriented_rect(pose, self.rear_overhang, front, self.width / T::lit(2.0))
    }

    /// Turning radius of the rear axle for a fixed steering angle.
    pub fn turn_radius(&self, steer: T) -> T {
        self.wheelbase / steer.tan().abs()
    }

    pub fn check(&self) -> Result<(), SimError> {
        let z = T::zero();
        if !(self.wheelbase > z && self.max_speed > z && self.max_steer > z && self.max_accel > z) {
            return Err(SimError::Invariant("vehicle limits must be positive".into()));
        }
        if !(self.length > self.rear_overhang && self.rear_overhang >= z && self.width > z) {
            return Err(SimError::Invariant("vehicle body dimensions are inconsistent".into()));
        }
        if self.steering_angle.abs() > self.max_steer || self.speed.abs() > self.max_speed {
            return Err(SimError::Invariant("vehicle state exceeds its limits".into()));
        }
        Ok(())
    }
}

/// Throttle in [−1, 1] scales `max_accel`; steering changes at `steer_rate` rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Control<T> {
    pub throttle: T,
    pub steer_rate: T,
}

impl<T: Real> Control<T> {
    pub fn new(throttle: T, steer_rate: T) -> Self {
        Control { throttle, steer_rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Obstacle<T> {
    pub id: String,
    pub kind: String,
    pub polygon: Polygon<T>,
    /// Whether the obstacle is part of the prior map used for global planning.
    pub mapped: bool,
}

impl<T: Real> Obstacle<T> {
    pub fn new(id: impl Into<String>, kind: impl Into<String>, polygon: Polygon<T>) -> Self {
        Obstacle {
            id: id.into(),
            kind: kind.into(),
            polygon,
            mapped: true,
        }
    }

    pub fn unmapped(mut self) -> Self {
        self.mapped = false;
        self
    }
}

/// Axis-aligned map extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Bounds<T> {
    pub min: Vec2<T>,
    pub max: Vec2<T>,
}

impl<T: Real> Bounds<T> {
    pub fn new(min: Vec2<T>, max: Vec2<T>) -> Self {
        Bounds { min, max }
    }

    pub fn contains(&self, p: Vec2<T>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> T {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> T {
        self.max.y - self.min.y
    }
}

impl<T: Real> Default for Bounds<T> {
    fn default() -> Self {
        Bounds::new(Vec2::new(T::zero(), T::zero()), Vec2::new(T::lit(60.0), T::lit(12.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct World<T> {
    pub ego: VehicleState<T>,
    pub obstacles: Vec<Obstacle<T>>,
    pub lanes: Vec<Vec<Vec2<T>>>,
    pub goal: Pose<T>,
    pub time: T,
    pub bounds: Bounds<T>,
}

impl<T: Real> World<T> {
    pub fn new(ego: VehicleState<T>, goal: Pose<T>) -> Self {
        World {
            ego,
            obstacles: Vec::new(),
            lanes: Vec::new(),
            goal,
            time: T::zero(),
            bounds: Bounds::default(),
        }
    }

    pub fn with_obstacle(mut self, obstacle: Obstacle<T>) -> Self {
        self.obstacles.push(obstacle);
        self
    }

    pub fn with_lane(mut self, lane: Vec<Vec2<T>>) -> Self {
        self.lanes.push(lane);
        self
    }

    pub fn with_bounds(mut self, bounds: Bounds<T>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn goal_distance(&self) -> T {
        self.ego.pose.distance_to(&self.goal)
    }

    /// First obstacle overlapping the given footprint.
    pub fn collides(&self, footprint: &Polygon<T>) -> Option<&Obstacle<T>> {
        self.obstacles.iter().find(|o| o.polygon.intersects(footprint))
    }

    pub fn check(&self) -> Result<(), SimError> {
        self.ego.check()?;
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.obstacles {
            if !o.polygon.is_simple() {
                return Err(SimError::Invariant(format!("obstacle `{}` polygon is not simple", o.id)));
            }
            if !ids.insert(o.id.as_str()) {
                return Err(SimError::Invariant(format!("duplicate obstacle id `{}`", o.id)));
            }
        }
        if let Some(o) = self.collides(&self.ego.footprint()) {
            return Err(SimError::Invariant(format!("ego spawned inside obstacle `{}`", o.id)));
        }
        if !self.bounds.contains(self.ego.pose.position()) || !self.bounds.contains(self.goal.position()) {
            return Err(SimError::Invariant("ego or goal outside map bounds".into()));
        }
        Ok(())
    }
}

/// Advances the world by one kinematic bicycle step and rejects colliding moves.
pub fn step<T: Real>(world: &World<T>, control: Control<T>, dt: T) -> Result<World<T>, SimError> {
    if !(dt > T::zero() && dt <= T::lit(0.1)) {
        return Err(SimError::InvalidStep { dt: dt.as_f64() });
    }
    if !control.throttle.is_finite() || !control.steer_rate.is_finite() {
        return Err(SimError::InvalidControl("non-finite control".into()));
    }
    let mut next = world.clone();
    let ego = &mut next.ego;
    let throttle = control.throttle.max(-T::one()).min(T::one());
    ego.steering_angle = (ego.steering_angle + control.steer_rate * dt).max(-ego.max_steer).min(ego.max_steer);
    ego.speed = (ego.speed + throttle * ego.max_accel * dt).max(-ego.max_speed).min(ego.max_speed);
    let (v, th) = (ego.speed, ego.pose.heading);
    ego.pose.x = ego.pose.x + v * th.cos() * dt;
    ego.pose.y = ego.pose.y + v * th.sin() * dt;
    ego.pose.heading = normalize_angle(th + v / ego.wheelbase * ego.steering_angle.tan() * dt);
    next.time = next.time + dt;
    if let Some(o) = next.collides(&next.ego.footprint()) {
        return Err(SimError::Collision {
            obstacle: o.id.clone(),
            time: next.time.as_f64(),
        });
    }
    Ok(next)
}

/// Ranges from the ego reference point along rays fanned symmetrically about its heading.
pub fn raycast<T: Real>(world: &World<T>, n_rays: usize, fov: T, max_range: T) -> Vec<T> {
    assert!(n_rays >= 1 && max_range > T::zero(), "raycast needs n_rays >= 1 and max_range > 0");
    let origin = world.ego.pose.position();
    (0..n_rays)
        .map(|i| {
            let offset = if n_rays == 1 {
                T::zero()
            } else {
                -fov / T::lit(2.0) + fov * T::lit(i as f64) / T::lit((n_rays - 1) as f64)
            };
            let dir = Vec2::from_angle(world.ego.pose.heading + offset);
            world
                .obstacles
                .iter()
                .flat_map(|o| o.polygon.edges())
                .filter_map(|(a, b)| ray_segment(origin, dir, a, b))
                .fold(max_range, T::min)
        })
        .collect()
}
