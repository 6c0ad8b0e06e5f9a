//! Failure-triggered recovery: baseline, stall detection, pipeline, generated tree.

mod episode;
mod pipeline;
mod record;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use episode::{baseline_tree, Episode, PolicyError, Sample, Termination, TreeRun, TriggerPolicy, BASELINE_XML};
pub use pipeline::{
    invoke_pipeline, invoke_pipeline_with_timeout, Agent, AgentMetrics, PipelineError, PipelineMetrics, PipelineOutput,
    PipelineResult,
};
pub use record::{metrics_csv, trajectory_csv, trajectory_svg, Outcome, RunRecord, WallClock};

use crate::agents::{AgentContext, SceneSnapshot};
use crate::bt::{BehaviorTree, NodePalette, TickStatus};
use crate::llm::Backend;
use crate::sim::{render_snapshot, ExecError, RenderConfig, SimParams};
use crate::{Scenario, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub policy: TriggerPolicy,
    pub sim: SimParams,
    pub render: RenderConfig,
    #[serde(with = "crate::llm::duration_secs")]
    pub pipeline_timeout: Duration,
    /// Simulated seconds before a run that keeps moving is cut off.
    pub max_baseline_time: f64,
    pub max_generated_time: f64,
    /// Record host wall-clock time per phase.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            policy: TriggerPolicy::default(),
            sim: SimParams::default(),
            render: RenderConfig::default(),
            pipeline_timeout: Duration::from_secs(120),
            max_baseline_time: 600.0,
            max_generated_time: 120.0,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("simulator error during the baseline run: {0}")]
    Simulator(#[from] ExecError),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub record: RunRecord,
    pub trajectory: Vec<Sample>,
    /// The snapshot handed to the Descriptor, when the pipeline was triggered.
    pub snapshot: Option<SceneSnapshot>,
    pub final_world: World,
}

/// Runs the baseline and, only on its Failure, the pipeline and the generated tree.
pub fn run_scenario(
    scenario: &Scenario,
    baseline: &BehaviorTree,
    palette: &NodePalette,
    backend: Arc<dyn Backend>,
    ctx: &AgentContext,
    options: &RunOptions,
) -> Result<RunReport, OrchestratorError> {
    options.policy.check()?;
    let clock = Instant::now();
    let mut episode = Episode::new(scenario, options.sim.clone());
    let base = episode.run_baseline(baseline, &options.policy, options.max_baseline_time)?;
    let baseline_s = clock.elapsed().as_secs_f64();
    let triggered = base.status == TickStatus::Failure;

    let mut record = RunRecord {
        scenario_id: scenario.id.clone(),
        baseline_status: base.status,
        baseline_termination: base.termination,
        triggered,
        observation: None,
        plan: None,
        generated_tree: None,
        repaired_goals: Vec::new(),
        generated_status: None,
        outcome: Outcome::BaselineSucceeded,
        error: None,
        metrics: None,
        final_goal_distance: 0.0,
        sim_time: 0.0,
        wall_clock: None,
    };
    let (mut pipeline_s, mut generated_s) = (0.0, 0.0);
    let mut snapshot = None;

    if triggered {
        // the vehicle holds its stop while the pipeline runs
        let snap = render_snapshot(episode.world(), scenario, &options.render);
        snapshot = Some(snap.clone());
        let ctx = match &ctx.scene_tag {
            Some(_) => ctx.clone(),
            None => ctx.clone().with_scene_tag(scenario.scene_tag()),
        };
        let started = Instant::now();
        let result = invoke_pipeline_with_timeout(snap, palette.clone(), backend, ctx, options.pipeline_timeout);
        pipeline_s = started.elapsed().as_secs_f64();
        match result {
            Ok(PipelineResult::Halted { observation, metrics }) => {
                record.observation = Some(observation);
                record.metrics = Some(metrics);
                record.outcome = Outcome::PipelineHaltedNonCritical;
            }
            Ok(PipelineResult::Completed(out)) => {
                let started = Instant::now();
                let run = episode.execute_generated(&out.tree, options.max_generated_time);
                generated_s = started.elapsed().as_secs_f64();
                record.observation = Some(out.observation);
                record.plan = Some(out.plan);
                record.generated_tree = Some(out.tree);
                record.repaired_goals = out.repaired;
                record.metrics = Some(out.metrics);
                match run {
                    Ok(run) => {
                        record.generated_status = Some(run.status);
                        record.outcome = if run.status == TickStatus::Success {
                            Outcome::RecoveredByGeneratedTree
                        } else {
                            Outcome::GeneratedTreeFailed
                        };
                    }
                    Err(e) => {
                        record.generated_status = Some(TickStatus::Failure);
                        record.outcome = Outcome::GeneratedTreeFailed;
                        record.error = Some(e.to_string());
                    }
                }
            }
            Err(e) => {
                if let PipelineError::Stage { metrics, .. } = &e {
                    record.metrics = Some(metrics.clone());
                }
                record.outcome = Outcome::PipelineError;
                record.error = Some(e.to_string());
            }
        }
    }

    record.final_goal_distance = episode.world().goal_distance();
    record.sim_time = episode.world().time;
    if options.timing {
        record.wall_clock = Some(WallClock {
            baseline_s,
            pipeline_s,
            generated_s,
        });
    }
    debug_assert!(record.check().is_ok());
    Ok(RunReport {
        record,
        trajectory: episode.trajectory().to_vec(),
        snapshot,
        final_world: episode.world().clone(),
    })
}
