//! Top-down raster and structured views of a world instant.

use std::io::Cursor;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::geometry::{Polygon, Pose, Vec2};
use super::scenario::Scenario;
use super::world::World;
use crate::scalar::Real;

/// Row-major RGB image, 8 bits per channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "EncodedRaster", try_from = "EncodedRaster")]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct EncodedRaster {
    width: u32,
    height: u32,
    png_base64: String,
}

impl From<Raster> for EncodedRaster {
    fn from(r: Raster) -> Self {
        EncodedRaster {
            width: r.width,
            height: r.height,
            png_base64: base64::engine::general_purpose::STANDARD.encode(r.to_png()),
        }
    }
}

impl TryFrom<EncodedRaster> for Raster {
    type Error = String;
    fn try_from(e: EncodedRaster) -> Result<Self, String> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(e.png_base64)
            .map_err(|err| err.to_string())?;
        let r = Raster::from_png(&bytes)?;
        if (r.width, r.height) != (e.width, e.height) {
            return Err("raster dimensions disagree with the encoded image".into());
        }
        Ok(r)
    }
}

impl Raster {
    pub fn new(width: u32, height: u32, fill: [u8; 3]) -> Self {
        let data = fill.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        Raster { width, height, data }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    pub fn to_png(&self) -> Vec<u8> {
        let img = image::RgbImage::from_raw(self.width, self.height, self.data.clone()).expect("raster buffer matches its size");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).expect("in-memory PNG encoding");
        out.into_inner()
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, String> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| e.to_string())?
            .to_rgb8();
        Ok(Raster {
            width: img.width(),
            height: img.height(),
            data: img.into_raw(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObstacle {
    pub id: String,
    pub kind: String,
    pub pose: Pose<f64>,
    pub footprint: Vec<[f64; 2]>,
}

/// Machine-readable mirror of the world shown to the Descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredScene {
    pub ego_pose: Pose<f64>,
    pub ego_speed: f64,
    pub obstacles: Vec<SceneObstacle>,
    pub lanes: Vec<Vec<[f64; 2]>>,
    pub goal_pose: Pose<f64>,
    pub narrative: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<Raster>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured_scene: Option<StructuredScene>,
}

impl SceneSnapshot {
    pub fn check(&self) -> Result<(), String> {
        if self.image.is_none() && self.structured_scene.is_none() {
            return Err("snapshot carries neither an image nor a structured scene".into());
        }
        if let Some(img) = &self.image {
            if img.width == 0 || img.height == 0 || img.data.len() != img.width as usize * img.height as usize * 3 {
                return Err("snapshot image has invalid dimensions".into());
            }
        }
        Ok(())
    }

    /// Short scene tag: the narrative text before its first `:`.
    pub fn scene_tag(&self) -> Option<&str> {
        self.structured_scene.as_ref().map(|s| scene_tag_of(&s.narrative))
    }
}

pub fn scene_tag_of(narrative: &str) -> &str {
    narrative.split_once(':').map_or(narrative, |(tag, _)| tag).trim()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    pub rasterize: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 640,
            height: 480,
            rasterize: true,
        }
    }
}

pub const BACKGROUND: [u8; 3] = [34, 34, 38];
pub const LANE: [u8; 3] = [235, 235, 235];
pub const OBSTACLE: [u8; 3] = [214, 39, 40];
pub const EGO: [u8; 3] = [31, 119, 230];
pub const GOAL: [u8; 3] = [44, 190, 80];

struct View {
    scale: f64,
    ox: f64,
    oy: f64,
    min: Vec2<f64>,
    height: u32,
}

impl View {
    fn to_px(&self, p: Vec2<f64>) -> (f64, f64) {
        let x = self.ox + (p.x - self.min.x) * self.scale;
        let y = self.height as f64 - (self.oy + (p.y - self.min.y) * self.scale);
        (x, y)
    }

    fn to_world(&self, px: f64, py: f64) -> Vec2<f64> {
        Vec2::new(
            self.min.x + (px - self.ox) / self.scale,
            self.min.y + (self.height as f64 - py - self.oy) / self.scale,
        )
    }
}

fn fill_polygon(r: &mut Raster, view: &View, poly: &Polygon<f64>, c: [u8; 3]) {
    let (lo, hi) = poly.bounds();
    let (x0, y1) = view.to_px(lo);
    let (x1, y0) = view.to_px(hi);
    for py in (y0.floor() as i64).max(0)..=(y1.ceil() as i64).min(r.height as i64 - 1) {
        for px in (x0.floor() as i64).max(0)..=(x1.ceil() as i64).min(r.width as i64 - 1) {
            if poly.contains(view.to_world(px as f64 + 0.5, py as f64 + 0.5)) {
                r.put(px, py, c);
            }
        }
    }
}

fn draw_line(r: &mut Raster, view: &View, a: Vec2<f64>, b: Vec2<f64>, c: [u8; 3]) {
    let (ax, ay) = view.to_px(a);
    let (bx, by) = view.to_px(b);
    let n = ((bx - ax).abs().max((by - ay).abs()) * 2.0).ceil().max(1.0) as usize;
    for k in 0..=n {
        let t = k as f64 / n as f64;
        let (x, y) = (ax + (bx - ax) * t, ay + (by - ay) * t);
        r.put(x.floor() as i64, y.floor() as i64, c);
        r.put(x.floor() as i64 + 1, y.floor() as i64, c);
    }
}

fn fill_disk(r: &mut Raster, view: &View, center: Vec2<f64>, radius: f64, c: [u8; 3]) {
    let (cx, cy) = view.to_px(center);
    let rp = radius * view.scale;
    for py in (cy - rp).floor() as i64..=(cy + rp).ceil() as i64 {
        for px in (cx - rp).floor() as i64..=(cx + rp).ceil() as i64 {
            let (dx, dy) = (px as f64 + 0.5 - cx, py as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= rp * rp {
                r.put(px, py, c);
            }
        }
    }
}

/// Rasterizes the world top-down, fitting the map bounds into the image.
pub fn rasterize<T: Real>(world: &World<T>, width: u32, height: u32) -> Raster {
    let min = world.bounds.min.cast::<f64>();
    let (bw, bh) = (world.bounds.width().as_f64(), world.bounds.height().as_f64());
    let scale = (width as f64 / bw).min(height as f64 / bh);
    let view = View {
        scale,
        ox: (width as f64 - bw * scale) / 2.0,
        oy: (height as f64 - bh * scale) / 2.0,
        min,
        height,
    };
    let mut r = Raster::new(width, height, BACKGROUND);
    for lane in &world.lanes {
        for w in lane.windows(2) {
            draw_line(&mut r, &view, w[0].cast(), w[1].cast(), LANE);
        }
    }
    for o in &world.obstacles {
        let poly = Polygon::new(o.polygon.vertices.iter().map(|v| v.cast()).collect());
        fill_polygon(&mut r, &view, &poly, OBSTACLE);
    }
    let goal = Pose::<f64>::from_array(world.goal.to_array());
    fill_disk(&mut r, &view, goal.position(), 0.6, GOAL);
    draw_line(&mut r, &view, goal.position(), goal.transform(Vec2::new(1.5, 0.0)), GOAL);
    let fp = world.ego.footprint();
    let fp = Polygon::new(fp.vertices.iter().map(|v| v.cast()).collect());
    fill_polygon(&mut r, &view, &fp, EGO);
    r
}

pub fn structured_scene<T: Real>(world: &World<T>, narrative: &str) -> StructuredScene {
    let arr = |v: &Vec2<T>| [v.x.as_f64(), v.y.as_f64()];
    StructuredScene {
        ego_pose: Pose::from_array(world.ego.pose.to_array()),
        ego_speed: world.ego.speed.as_f64(),
        obstacles: world
            .obstacles
            .iter()
            .map(|o| {
                let c = o.polygon.centroid();
                SceneObstacle {
                    id: o.id.clone(),
                    kind: o.kind.clone(),
                    pose: Pose::new(c.x.as_f64(), c.y.as_f64(), o.polygon.principal_heading().as_f64()),
                    footprint: o.polygon.vertices.iter().map(arr).collect(),
                }
            })
            .collect(),
        lanes: world.lanes.iter().map(|l| l.iter().map(arr).collect()).collect(),
        goal_pose: Pose::from_array(world.goal.to_array()),
        narrative: narrative.to_string(),
    }
}

/// Both views of the same instant; the raster only when enabled.
pub fn render_snapshot<T: Real>(world: &World<T>, scenario: &Scenario<T>, config: &RenderConfig) -> SceneSnapshot {
    SceneSnapshot {
        image: config.rasterize.then(|| rasterize(world, config.width, config.height)),
        structured_scene: Some(structured_scene(world, &scenario.narrative)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::world::{Obstacle, VehicleState};

    fn world() -> World<f64> {
        World::new(VehicleState::new(Pose::new(10.0, 4.0, 0.0), 2.8, 8.0, 0.6), Pose::new(50.0, 8.0, 0.0))
            .with_lane(vec![Vec2::new(0.0, 6.0), Vec2::new(60.0, 6.0)])
            .with_obstacle(Obstacle::new("t", "fire_truck", Polygon::rect(Vec2::new(30.0, 3.0), Vec2::new(40.0, 5.0))))
    }

    #[test]
    fn colors_land_where_expected() {
        let w = world();
        let r = rasterize(&w, 640, 480);
        assert_eq!((r.width, r.height, r.data.len()), (640, 480, 640 * 480 * 3));
        let scale = 640.0 / 60.0;
        let y_px = |y: f64| (480.0 - ((480.0 - 12.0 * scale) / 2.0 + y * scale)) as u32;
        assert_eq!(r.pixel((35.0 * scale) as u32, y_px(4.0)), OBSTACLE);
        assert_eq!(r.pixel((11.5 * scale) as u32, y_px(4.0)), EGO);
        assert_eq!(r.pixel((50.0 * scale) as u32, y_px(8.0)), GOAL);
        assert_eq!(r.pixel(2, 2), BACKGROUND);
    }

    #[test]
    fn png_round_trip() {
        let r = rasterize(&world(), 64, 48);
        assert_eq!(Raster::from_png(&r.to_png()).unwrap(), r);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<Raster>(&json).unwrap(), r);
    }

    #[test]
    fn tag_is_narrative_prefix() {
        assert_eq!(scene_tag_of("blocked_lane: a truck"), "blocked_lane");
        assert_eq!(scene_tag_of("plain"), "plain");
    }
}
