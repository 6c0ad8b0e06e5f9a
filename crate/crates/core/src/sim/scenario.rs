//! Scenario files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{Polygon, Pose, Vec2};
use super::world::{Bounds, Obstacle, SimError, VehicleState, World};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario invariant violated: {0}")]
    Invariant(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub id: String,
    pub world: World<T>,
    pub narrative: String,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EgoFile {
    x: f64,
    y: f64,
    heading: f64,
    wheelbase: f64,
    max_speed: f64,
    max_steer: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rear_overhang: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_accel: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleFile {
    id: String,
    kind: String,
    polygon: Vec<[f64; 2]>,
    #[serde(default = "yes")]
    mapped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    x: f64,
    y: f64,
    heading: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsFile {
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    id: String,
    ego: EgoFile,
    obstacles: Vec<ObstacleFile>,
    lanes: Vec<Vec<[f64; 2]>>,
    goal: PoseFile,
    narrative: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bounds: Option<BoundsFile>,
}

fn v<T: Real>(p: [f64; 2]) -> Vec2<T> {
    Vec2::new(T::lit(p[0]), T::lit(p[1]))
}

fn arr<T: Real>(p: &Vec2<T>) -> [f64; 2] {
    [p.x.as_f64(), p.y.as_f64()]
}

impl<T: Real> Scenario<T> {
    pub fn new(id: impl Into<String>, world: World<T>, narrative: impl Into<String>) -> Self {
        Scenario {
            id: id.into(),
            world,
            narrative: narrative.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let f: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if f.id.trim().is_empty() {
            return Err(ScenarioError::Parse("scenario id is empty".into()));
        }
        let e = &f.ego;
        let mut ego = VehicleState::new(
            Pose::new(T::lit(e.x), T::lit(e.y), T::lit(e.heading)),
            T::lit(e.wheelbase),
            T::lit(e.max_speed),
            T::lit(e.max_steer),
        );
        if let Some(l) = e.length {
            ego.length = T::lit(l);
        }
        if let Some(w) = e.width {
            ego.width = T::lit(w);
        }
        if let Some(r) = e.rear_overhang {
            ego.rear_overhang = T::lit(r);
        }
        if let Some(a) = e.max_accel {
            ego.max_accel = T::lit(a);
        }
        let goal = Pose::new(T::lit(f.goal.x), T::lit(f.goal.y), T::lit(f.goal.heading));
        let mut world = World::new(ego, goal);
        if let Some(b) = &f.bounds {
            world.bounds = Bounds::new(v(b.min), v(b.max));
        }
        for o in &f.obstacles {
            let mut obs = Obstacle::new(o.id.clone(), o.kind.clone(), Polygon::new(o.polygon.iter().map(|p| v(*p)).collect()));
            obs.mapped = o.mapped;
            world.obstacles.push(obs);
        }
        world.lanes = f.lanes.iter().map(|l| l.iter().map(|p| v(*p)).collect()).collect();
        world.check()?;
        Ok(Scenario::new(f.id, world, f.narrative))
    }

    pub fn to_json(&self) -> String {
        let w = &self.world;
        let e = &w.ego;
        let file = ScenarioFile {
            id: self.id.clone(),
            ego: EgoFile {
                x: e.pose.x.as_f64(),
                y: e.pose.y.as_f64(),
                heading: e.pose.heading.as_f64(),
                wheelbase: e.wheelbase.as_f64(),
                max_speed: e.max_speed.as_f64(),
                max_steer: e.max_steer.as_f64(),
                length: Some(e.length.as_f64()),
                width: Some(e.width.as_f64()),
                rear_overhang: Some(e.rear_overhang.as_f64()),
                max_accel: Some(e.max_accel.as_f64()),
            },
            obstacles: w
                .obstacles
                .iter()
                .map(|o| ObstacleFile {
                    id: o.id.clone(),
                    kind: o.kind.clone(),
                    polygon: o.polygon.vertices.iter().map(arr).collect(),
                    mapped: o.mapped,
                })
                .collect(),
            lanes: w.lanes.iter().map(|l| l.iter().map(arr).collect()).collect(),
            goal: PoseFile {
                x: w.goal.x.as_f64(),
                y: w.goal.y.as_f64(),
                heading: w.goal.heading.as_f64(),
            },
            narrative: self.narrative.clone(),
            bounds: Some(BoundsFile {
                min: arr(&w.bounds.min),
                max: arr(&w.bounds.max),
            }),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes") + "\n"
    }

    pub fn scene_tag(&self) -> &str {
        super::render::scene_tag_of(&self.narrative)
    }
}

pub fn load_scenario<T: Real>(path: &Path) -> Result<Scenario<T>, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_json(&text)
}

pub fn save_scenario<T: Real>(scenario: &Scenario<T>, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, scenario.to_json())
}

pub const FIRE_TRUCK_JSON: &str = include_str!("../../assets/scenarios/fire_truck.json");
pub const EMPTY_ROAD_JSON: &str = include_str!("../../assets/scenarios/empty_road.json");

/// A scenario bundled with the crate, looked up by id.
pub fn bundled_scenario<T: Real>(id: &str) -> Option<Scenario<T>> {
    let text = match id {
        "fire_truck" => FIRE_TRUCK_JSON,
        "empty_road" => EMPTY_ROAD_JSON,
        _ => return None,
    };
    Some(Scenario::from_json(text).expect("bundled scenario is valid"))
}
