//! The executable leaf palette grounding every tree in the simulator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{normalize_angle, point_segment_distance, Polygon, Pose, Vec2};
use super::path::{plan_path_among, PlannerConfig};
use super::world::{raycast, step, Control, SimError, World};
use crate::bt::{
    tick, Blackboard, BehaviorTree, Leaf, LeafExecutor, LeafKind, NodePalette, NodePath, PaletteEntry, TickStatus, UnknownLeaf,
    Value,
};

pub struct LeafSpec {
    pub id: &'static str,
    pub kind: LeafKind,
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
    pub summary: &'static str,
}

/// Registry of every leaf the simulator can execute.
pub const LEAVES: &[LeafSpec] = &[
    LeafSpec {
        id: "ComputePathToPose",
        kind: LeafKind::Action,
        required: &["goal_key", "path_key"],
        optional: &[],
        summary: "Plan a path on the prior map from the current pose to the pose stored under goal_key; store it under path_key.",
    },
    LeafSpec {
        id: "FollowPath",
        kind: LeafKind::Action,
        required: &["path_key"],
        optional: &["speed_mps", "tolerance_m"],
        summary: "Track the stored path with pure pursuit until within tolerance of its end; fails when progress stops.",
    },
    LeafSpec {
        id: "BackUp",
        kind: LeafKind::Action,
        required: &["distance_m", "speed_mps"],
        optional: &[],
        summary: "Reverse straight along the current heading for distance_m.",
    },
    LeafSpec {
        id: "Spin",
        kind: LeafKind::Action,
        required: &["angle_rad"],
        optional: &["speed_mps"],
        summary: "Change heading by angle_rad (positive is left) using a full-lock forward arc.",
    },
    LeafSpec {
        id: "DriveArc",
        kind: LeafKind::Action,
        required: &["distance_m", "steer_rad"],
        optional: &["speed_mps"],
        summary: "Drive distance_m with a fixed steering angle (positive is left, negative distance reverses).",
    },
    LeafSpec {
        id: "Stop",
        kind: LeafKind::Action,
        required: &[],
        optional: &[],
        summary: "Brake to a standstill.",
    },
    LeafSpec {
        id: "ObstacleAhead",
        kind: LeafKind::Condition,
        required: &["range_m"],
        optional: &[],
        summary: "Succeeds when the closest forward ray is shorter than range_m.",
    },
    LeafSpec {
        id: "GoalReached",
        kind: LeafKind::Condition,
        required: &["tolerance_m"],
        optional: &["goal_key"],
        summary: "Succeeds when the vehicle is within tolerance_m of the goal.",
    },
];

/// The palette derived from [`LEAVES`].
pub fn sim_palette() -> NodePalette {
    NodePalette::new(LEAVES.iter().map(|s| {
        (
            s.id.to_string(),
            PaletteEntry {
                kind: s.kind,
                required_params: s.required.iter().map(|p| p.to_string()).collect(),
                optional_params: s.optional.iter().map(|p| p.to_string()).collect(),
            },
        )
    }))
    .expect("leaf registry is a valid palette")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub dt: f64,
    pub planner: PlannerConfig<f64>,
    pub goal_tolerance: f64,
    pub cruise_speed: f64,
    pub lookahead_gain: f64,
    pub min_lookahead: f64,
    pub max_lookahead: f64,
    pub max_steer_rate: f64,
    /// FollowPath fails after this long without 0.1 m of progress.
    pub follow_timeout: f64,
    pub ray_count: usize,
    pub ray_fov: f64,
    pub ray_range: f64,
    /// Gap kept between the projected footprint and obstacles when stopping.
    pub guard_margin: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.05,
            planner: PlannerConfig::default(),
            goal_tolerance: 1.0,
            cruise_speed: 4.0,
            lookahead_gain: 0.8,
            min_lookahead: 2.0,
            max_lookahead: 6.0,
            max_steer_rate: 1.5,
            follow_timeout: 20.0,
            ray_count: 15,
            ray_fov: std::f64::consts::FRAC_PI_3,
            ray_range: 50.0,
            guard_margin: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error(transparent)]
    UnknownLeaf(#[from] UnknownLeaf),
    #[error("leaf `{id}` at {path}: parameter `{param}` {detail}")]
    Param {
        id: String,
        path: NodePath,
        param: String,
        detail: String,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
}

const LATCH: &str = "__latch";
const PROGRESS: &str = "__progress";

fn key(prefix: &str, path: &NodePath, field: &str) -> String {
    format!("{prefix}/{path}/{field}")
}

/// Drives a [`World`] from leaf invocations; one control command per tick.
#[derive(Debug, Clone)]
pub struct SimExecutor {
    world: World<f64>,
    params: SimParams,
    control: Option<Control<f64>>,
}

impl SimExecutor {
    pub fn new(world: World<f64>, params: SimParams) -> Self {
        SimExecutor { world, params, control: None }
    }

    pub fn world(&self) -> &World<f64> {
        &self.world
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn into_world(self) -> World<f64> {
        self.world
    }

    /// Command left by the last tick, or a brake to standstill when no action set one.
    pub fn control(&self) -> Control<f64> {
        self.control.unwrap_or_else(|| self.speed_control(0.0, self.world.ego.steering_angle))
    }

    /// Applies the pending control for one `dt` and clears it.
    pub fn advance(&mut self) -> Result<(), SimError> {
        let c = self.control();
        self.world = step(&self.world, c, self.params.dt)?;
        self.control = None;
        Ok(())
    }

    /// Ticks the tree once and, while it is Running, advances the world.
    pub fn tick_and_step(&mut self, tree: &BehaviorTree, bb: &mut Blackboard) -> Result<TickStatus, ExecError> {
        self.control = None;
        let status = tick(tree, bb, &mut *self)?;
        if status == TickStatus::Running {
            self.advance()?;
        }
        Ok(status)
    }

    fn speed_control(&self, v_target: f64, steer_target: f64) -> Control<f64> {
        let ego = &self.world.ego;
        let dt = self.params.dt;
        let throttle = ((v_target - ego.speed) / (ego.max_accel * dt)).clamp(-1.0, 1.0);
        let steer_target = steer_target.clamp(-ego.max_steer, ego.max_steer);
        let rate = ((steer_target - ego.steering_angle) / dt).clamp(-self.params.max_steer_rate, self.params.max_steer_rate);
        Control::new(throttle, rate)
    }

    /// True when moving straight in `direction` (±1) would hit an obstacle within stopping distance.
    pub fn path_blocked(&self, direction: f64) -> bool {
        let ego = &self.world.ego;
        let reach = ego.speed * ego.speed / (2.0 * ego.max_accel) + self.params.guard_margin;
        let n = (reach / 0.25).ceil().max(1.0) as usize;
        (1..=n).any(|k| {
            let s = direction * reach * k as f64 / n as f64;
            let pose = ego.pose.transform(Vec2::new(s, 0.0));
            let fp = ego.footprint_at(&Pose::new(pose.x, pose.y, ego.pose.heading));
            self.world.collides(&fp).is_some()
        })
    }

    fn num(&self, leaf: &Leaf, path: &NodePath, name: &str, default: Option<f64>) -> Result<f64, ExecError> {
        let err = |detail: &str| ExecError::Param {
            id: leaf.id.clone(),
            path: path.clone(),
            param: name.to_string(),
            detail: detail.to_string(),
        };
        match leaf.params.get(name) {
            Some(raw) => {
                let v: f64 = raw.trim().parse().map_err(|_| err(&format!("is not a number: `{raw}`")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(err("must be finite"))
                }
            }
            None => default.ok_or_else(|| err("is missing")),
        }
    }

    fn text<'a>(&self, leaf: &'a Leaf, path: &NodePath, name: &str) -> Result<&'a str, ExecError> {
        leaf.params.get(name).map(String::as_str).ok_or_else(|| ExecError::Param {
            id: leaf.id.clone(),
            path: path.clone(),
            param: name.to_string(),
            detail: "is missing".into(),
        })
    }

    fn pose_here(&self) -> Value {
        Value::Pose(self.world.ego.pose.to_array())
    }

    fn compute_path(&mut self, leaf: &Leaf, path: &NodePath, bb: &mut Blackboard) -> Result<TickStatus, ExecError> {
        let goal_key = self.text(leaf, path, "goal_key")?;
        let path_key = self.text(leaf, path, "path_key")?;
        let Some(goal) = bb.pose(goal_key) else {
            return Ok(TickStatus::Failure);
        };
        let prior: Vec<&Polygon<f64>> = self.world.obstacles.iter().filter(|o| o.mapped).map(|o| &o.polygon).collect();
        let config = PlannerConfig {
            robot_radius: self.params.planner.robot_radius.max(self.world.ego.width / 2.0),
            ..self.params.planner
        };
        match plan_path_among(&self.world.bounds, &prior, &self.world.ego.pose, &Pose::from_array(goal), &config) {
            Ok(p) => {
                bb.set(path_key, Value::Path(p.iter().map(Pose::to_array).collect()));
                Ok(TickStatus::Success)
            }
            Err(_) => Ok(TickStatus::Failure),
        }
    }

    fn follow_path(&mut self, leaf: &Leaf, path: &NodePath, bb: &mut Blackboard) -> Result<TickStatus, ExecError> {
        let path_key = self.text(leaf, path, "path_key")?;
        let speed = self.num(leaf, path, "speed_mps", Some(self.params.cruise_speed))?.abs();
        let tolerance = self.num(leaf, path, "tolerance_m", Some(self.params.goal_tolerance))?;
        let Some(pts) = bb.path(path_key).filter(|p| !p.is_empty()) else {
            return Ok(TickStatus::Failure);
        };
        let pts: Vec<Vec2<f64>> = pts.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        let ego = self.world.ego.clone();
        let here = ego.pose.position();
        let end = *pts.last().expect("non-empty path");
        let remaining = here.dist(end);
        if remaining <= tolerance {
            return Ok(TickStatus::Success);
        }

        let now = self.world.time;
        let best_key = key(PROGRESS, path, "best");
        let since_key = key(PROGRESS, path, "since");
        match bb.num(&best_key) {
            Some(best) if remaining > best - 0.1 => {
                if now - bb.num(&since_key).unwrap_or(now) > self.params.follow_timeout {
                    return Ok(TickStatus::Failure);
                }
            }
            _ => {
                bb.set(best_key, Value::Num(remaining));
                bb.set(since_key, Value::Num(now));
            }
        }

        // closest point, searching forward from the last matched segment
        let seg_key = key(PROGRESS, path, "segment");
        let start_seg = bb.num(&seg_key).unwrap_or(0.0) as usize;
        let first = start_seg.min(pts.len().saturating_sub(2));
        let mut seg = first;
        let mut best_d = f64::INFINITY;
        for i in first..pts.len().saturating_sub(1) {
            let d = point_segment_distance(here, pts[i], pts[i + 1]);
            if d < best_d {
                best_d = d;
                seg = i;
            }
        }
        bb.set(seg_key, Value::Num(seg as f64));

        let lookahead = (self.params.lookahead_gain * ego.speed.abs() + self.params.min_lookahead).min(self.params.max_lookahead);
        let target = if pts.len() == 1 {
            end
        } else {
            let (a, b) = (pts[seg], pts[seg + 1]);
            let ab = b - a;
            let t = if ab.dot(ab) > 0.0 { ((here - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0) } else { 0.0 };
            let mut left = lookahead;
            let mut cur = a + ab * t;
            let mut i = seg + 1;
            loop {
                let d = cur.dist(pts[i]);
                if d >= left {
                    break cur + (pts[i] - cur) * (left / d);
                }
                left -= d;
                cur = pts[i];
                if i + 1 == pts.len() {
                    break end;
                }
                i += 1;
            }
        };
        let local = ego.pose.to_local(target);
        let ld = local.norm().max(1e-6);
        let alpha = local.y.atan2(local.x);
        let steer = (2.0 * ego.wheelbase * alpha.sin() / ld).atan();

        let brake = 0.5 * ego.max_accel;
        let mut v_target = speed.min((2.0 * brake * (remaining - 0.5 * tolerance).max(0.0)).sqrt()).max(0.5_f64.min(speed));
        if self.path_blocked(1.0) {
            v_target = 0.0;
        }
        self.control = Some(self.speed_control(v_target, steer));
        Ok(TickStatus::Running)
    }

    fn back_up(&mut self, leaf: &Leaf, path: &NodePath, bb: &mut Blackboard) -> Result<TickStatus, ExecError> {
        let distance = self.num(leaf, path, "distance_m", None)?.abs();
        let speed = self.num(leaf, path, "speed_mps", None)?.abs();
        let start_key = key(PROGRESS, path, "start");
        let start = match bb.pose(&start_key) {
            Some(p) => p,
            None => {
                bb.set(start_key, self.pose_here());
                self.world.ego.pose.to_array()
            }
        };
        let moved = self.world.ego.pose.distance_to(&Pose::from_array(start));
        if moved >= distance {
            return Ok(TickStatus::Success);
        }
        let v = if self.path_blocked(-1.0) { 0.0 } else { -speed };
        self.control = Some(self.speed_control(v, 0.0));
        Ok(TickStatus::Running)
    }

    fn travelled(&self, path: &NodePath, bb: &mut Blackboard) -> f64 {
        let last_key = key(PROGRESS, path, "last");
        let acc_key = key(PROGRESS, path, "travelled");
        let mut acc = bb.num(&acc_key).unwrap_or(0.0);
        if let Some(last) = bb.pose(&last_key) {
            acc += self.world.ego.pose.distance_to(&Pose::from_array(last));
        }
        bb.set(last_key, self.pose_here());
        bb.set(acc_key, Value::Num(acc));
        acc
    }

    fn drive_arc(&mut self, leaf: &Leaf, path: &NodePath, bb: &mut Blackboard) -> Result<TickStatus, ExecError> {
        let distance = self.num(leaf, path, "distance_m", None)?;
        let steer = self.num(leaf, path, "steer_rad", None)?;
        let speed = self.num(leaf, path, "speed_mps", Some(2.0))?.abs();
        if self.travelled(path, bb) >= distance.abs() {
            return Ok(TickStatus::Success);
        }
        let dir = if distance < 0.0 { -1.0 } else { 1.0 };
        let v = if self.path_blocked(dir) { 0.0 } else { dir * speed };
        self.control = Some(self.speed_control(v, steer));
        Ok(TickStatus::Running)
    }

    fn spin(&mut self, leaf: &Leaf, path: &NodePath, bb: &mut Blackboard) -> Result<TickStatus, ExecError> {
        let angle = self.num(leaf, path, "angle_rad", None)?;
        let speed = self.num(leaf, path, "speed_mps", Some(1.5))?.abs();
        let last_key = key(PROGRESS, path, "last_heading");
        let acc_key = key(PROGRESS, path, "turned");
        let heading = self.world.ego.pose.heading;
        let mut turned = bb.num(&acc_key).unwrap_or(0.0);
        if let Some(last) = bb.num(&last_key) {
            turned += normalize_angle(heading - last);
        }
        bb.set(last_key, Value::Num(heading));
        bb.set(acc_key, Value::Num(turned));
        if turned * angle.signum() >= angle.abs() {
            return Ok(TickStatus::Success);
        }
        let v = if self.path_blocked(1.0) { 0.0 } else { speed };
        self.control = Some(self.speed_control(v, angle.signum() * self.world.ego.max_steer));
        Ok(TickStatus::Running)
    }

    fn run_action(&mut self, leaf: &Leaf, path: &NodePath, bb: &mut Blackboard) -> Result<TickStatus, ExecError> {
        match leaf.id.as_str() {
            "ComputePathToPose" => self.compute_path(leaf, path, bb),
            "FollowPath" => self.follow_path(leaf, path, bb),
            "BackUp" => self.back_up(leaf, path, bb),
            "Spin" => self.spin(leaf, path, bb),
            "DriveArc" => self.drive_arc(leaf, path, bb),
            "Stop" => {
                self.control = Some(self.speed_control(0.0, self.world.ego.steering_angle));
                Ok(TickStatus::Success)
            }
            _ => Err(UnknownLeaf {
                id: leaf.id.clone(),
                kind: LeafKind::Action,
                path: path.clone(),
            }
            .into()),
        }
    }

    fn run_condition(&mut self, leaf: &Leaf, path: &NodePath, bb: &Blackboard) -> Result<TickStatus, ExecError> {
        let ok = match leaf.id.as_str() {
            "ObstacleAhead" => {
                let range = self.num(leaf, path, "range_m", None)?;
                let rays = raycast(&self.world, self.params.ray_count, self.params.ray_fov, self.params.ray_range);
                rays.into_iter().fold(f64::INFINITY, f64::min) < range
            }
            "GoalReached" => {
                let tol = self.num(leaf, path, "tolerance_m", None)?;
                let goal = leaf
                    .params
                    .get("goal_key")
                    .and_then(|k| bb.pose(k))
                    .map(Pose::from_array)
                    .unwrap_or(self.world.goal);
                self.world.ego.pose.distance_to(&goal) <= tol
            }
            _ => {
                return Err(UnknownLeaf {
                    id: leaf.id.clone(),
                    kind: LeafKind::Condition,
                    path: path.clone(),
                }
                .into())
            }
        };
        Ok(if ok { TickStatus::Success } else { TickStatus::Failure })
    }
}

impl LeafExecutor for SimExecutor {
    type Error = ExecError;

    fn execute(&mut self, kind: LeafKind, leaf: &Leaf, path: &NodePath, bb: &mut Blackboard) -> Result<TickStatus, ExecError> {
        match kind {
            LeafKind::Condition => self.run_condition(leaf, path, bb),
            LeafKind::Action => {
                let latch = key(LATCH, path, "status");
                match bb.get(&latch) {
                    Some(Value::Str(s)) if s == "Success" => return Ok(TickStatus::Success),
                    Some(Value::Str(s)) if s == "Failure" => return Ok(TickStatus::Failure),
                    _ => {}
                }
                let status = self.run_action(leaf, path, bb)?;
                if status.is_terminal() {
                    bb.set(latch, Value::Str(status.to_string()));
                }
                Ok(status)
            }
        }
    }
}
