//! Desk-scale 2D driving world and its leaf-node palette.

mod executor;
mod geometry;
mod path;
mod render;
mod scenario;
mod world;

pub use executor::{sim_palette, ExecError, LeafSpec, SimExecutor, SimParams, LEAVES};
pub use geometry::{normalize_angle, point_segment_distance, ray_segment, segments_intersect, Polygon, Pose, Vec2};
pub use path::{path_length, plan_path, plan_path_among, segment_polygon_distance, PathError, PlannerConfig};
pub use render::{
    rasterize, render_snapshot, scene_tag_of, structured_scene, Raster, RenderConfig, SceneObstacle, SceneSnapshot, StructuredScene,
    BACKGROUND, EGO, GOAL, LANE, OBSTACLE,
};
pub use scenario::{bundled_scenario, load_scenario, save_scenario, Scenario, ScenarioError, EMPTY_ROAD_JSON, FIRE_TRUCK_JSON};
pub use world::{raycast, step, Bounds, Control, Obstacle, SimError, VehicleState, World};
