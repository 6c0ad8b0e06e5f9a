//! Run records and their file forms.

use std::fmt::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::episode::{Sample, Termination};
use super::pipeline::{Agent, PipelineMetrics};
use crate::agents::{Observation, Plan};
use crate::bt::{parse_bt_xml, serialize_bt, BehaviorTree, TickStatus};
use crate::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    BaselineSucceeded,
    RecoveredByGeneratedTree,
    GeneratedTreeFailed,
    PipelineHaltedNonCritical,
    PipelineError,
}

/// Host time spent in each phase; left out of deterministic records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub baseline_s: f64,
    pub pipeline_s: f64,
    pub generated_s: f64,
}

mod tree_xml {
    use super::*;

    pub fn serialize<S: Serializer>(tree: &Option<BehaviorTree>, s: S) -> Result<S::Ok, S::Error> {
        tree.as_ref().map(serialize_bt).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BehaviorTree>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|xml| parse_bt_xml(&xml).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario_id: String,
    pub baseline_status: TickStatus,
    pub baseline_termination: Termination,
    pub triggered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "tree_xml")]
    pub generated_tree: Option<BehaviorTree>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repaired_goals: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_status: Option<TickStatus>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PipelineMetrics>,
    pub final_goal_distance: f64,
    pub sim_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<WallClock>,
}

impl RunRecord {
    pub fn check(&self) -> Result<(), String> {
        if self.triggered != (self.baseline_status == TickStatus::Failure) {
            return Err("triggered must equal baseline Failure".into());
        }
        if !self.triggered && (self.observation.is_some() || self.plan.is_some() || self.generated_tree.is_some()) {
            return Err("pipeline artifacts on an untriggered run".into());
        }
        if let Some(m) = &self.metrics {
            if !m.is_consistent() {
                return Err("metrics totals disagree with per-agent values".into());
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run record serializes") + "\n"
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("run record serializes")
    }
}

#[derive(Serialize)]
struct MetricRow<'a> {
    scenario_id: &'a str,
    agent: String,
    gt_seconds: f64,
    tc_tokens: u64,
}

/// One row per agent and a `Total` row for every record carrying metrics.
pub fn metrics_csv(records: &[RunRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut wrote = false;
    for r in records {
        let Some(m) = &r.metrics else { continue };
        let rows = Agent::ALL
            .iter()
            .filter_map(|a| m.per_agent.get(a).map(|am| (a.to_string(), am.gt, am.tc)))
            .chain(std::iter::once(("Total".to_string(), m.total_gt, m.total_tc)));
        for (agent, gt, tc) in rows {
            w.serialize(MetricRow {
                scenario_id: &r.scenario_id,
                agent,
                gt_seconds: crate::llm::duration_to_secs(gt),
                tc_tokens: tc,
            })
            .expect("in-memory csv");
            wrote = true;
        }
    }
    if !wrote {
        w.write_record(["scenario_id", "agent", "gt_seconds", "tc_tokens"]).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}

pub fn trajectory_csv(samples: &[Sample]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in samples {
        w.serialize(s).expect("in-memory csv");
    }
    if samples.is_empty() {
        w.write_record(["t", "x", "y", "theta", "v"]).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}

/// Overhead plot of the map with the driven trajectory.
pub fn trajectory_svg(world: &World, samples: &[Sample]) -> String {
    let scale = 16.0;
    let (min, max) = (world.bounds.min, world.bounds.max);
    let (w, h) = ((max.x - min.x) * scale, (max.y - min.y) * scale);
    let px = |x: f64, y: f64| ((x - min.x) * scale, h - (y - min.y) * scale);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#);
    let _ = writeln!(out, r##"  <rect width="100%" height="100%" fill="#222226"/>"##);
    for lane in &world.lanes {
        let pts: Vec<String> = lane.iter().map(|p| px(p.x, p.y)).map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(out, r##"  <polyline points="{}" fill="none" stroke="#ebebeb" stroke-dasharray="8 6"/>"##, pts.join(" "));
    }
    for o in &world.obstacles {
        let pts: Vec<String> = o.polygon.vertices.iter().map(|p| px(p.x, p.y)).map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(out, r##"  <polygon points="{}" fill="#d62728"><title>{}</title></polygon>"##, pts.join(" "), o.kind);
    }
    let (gx, gy) = px(world.goal.x, world.goal.y);
    let _ = writeln!(out, r##"  <circle cx="{gx:.1}" cy="{gy:.1}" r="{:.1}" fill="#2cbe50"/>"##, 0.6 * scale);
    let pts: Vec<String> = samples.iter().map(|s| px(s.x, s.y)).map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    let _ = writeln!(out, r##"  <polyline points="{}" fill="none" stroke="#1f77e6" stroke-width="2"/>"##, pts.join(" "));
    out.push_str("</svg>\n");
    out
}
