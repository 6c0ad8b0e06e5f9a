//! Descriptor → Planner → Generator composition with per-agent metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{mpsc, Arc};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{self, AgentContext, AgentError, Observation, Plan, SceneSnapshot, Usage};
use crate::bt::{concat_under_sequence, BehaviorTree, NodePalette, TreeError};
use crate::llm::Backend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Agent {
    Descriptor,
    Planner,
    Generator,
}

impl Agent {
    pub const ALL: [Agent; 3] = [Agent::Descriptor, Agent::Planner, Agent::Generator];
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgentMetrics {
    /// Generation time: summed backend latency of the agent's calls.
    #[serde(with = "crate::llm::duration_secs")]
    pub gt: Duration,
    /// Token consumption: prompt plus completion tokens.
    pub tc: u64,
}

impl From<&Usage> for AgentMetrics {
    fn from(u: &Usage) -> Self {
        AgentMetrics { gt: u.latency, tc: u.tokens() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PipelineMetrics {
    pub per_agent: BTreeMap<Agent, AgentMetrics>,
    #[serde(with = "crate::llm::duration_secs")]
    pub total_gt: Duration,
    pub total_tc: u64,
}

impl PipelineMetrics {
    pub fn add(&mut self, agent: Agent, usage: &Usage) {
        let m = self.per_agent.entry(agent).or_default();
        m.gt += usage.latency;
        m.tc += usage.tokens();
        self.total_gt = self.per_agent.values().map(|m| m.gt).sum();
        self.total_tc = self.per_agent.values().map(|m| m.tc).sum();
    }

    pub fn is_consistent(&self) -> bool {
        self.total_gt == self.per_agent.values().map(|m| m.gt).sum::<Duration>()
            && self.total_tc == self.per_agent.values().map(|m| m.tc).sum::<u64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub observation: Observation,
    pub plan: Plan,
    pub tree: BehaviorTree,
    /// Indices of sub-goals whose subtree needed the repair round.
    pub repaired: Vec<usize>,
    pub metrics: PipelineMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineResult {
    Completed(PipelineOutput),
    /// The Descriptor judged the scene non-critical; nothing else ran.
    Halted { observation: Observation, metrics: PipelineMetrics },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {source}")]
    Stage { stage: Agent, source: AgentError, metrics: PipelineMetrics },
    #[error("could not assemble the generated tree: {0}")]
    Assemble(TreeError),
    #[error("pipeline exceeded its {0:?} time limit")]
    Timeout(Duration),
    #[error("pipeline worker stopped unexpectedly")]
    WorkerLost,
}

/// Runs describe, then plan and per-sub-goal generate, and chains the subtrees.
pub fn invoke_pipeline(
    snapshot: &SceneSnapshot,
    palette: &NodePalette,
    backend: &dyn Backend,
    ctx: &AgentContext,
) -> Result<PipelineResult, PipelineError> {
    let mut metrics = PipelineMetrics::default();
    let fail = |stage, source, metrics: &PipelineMetrics| PipelineError::Stage {
        stage,
        source,
        metrics: metrics.clone(),
    };
    let ctx = match (&ctx.scene_tag, snapshot.scene_tag()) {
        (None, Some(tag)) => ctx.clone().with_scene_tag(tag),
        _ => ctx.clone(),
    };

    let (observation, usage) = agents::describe(snapshot, backend, &ctx).map_err(|e| fail(Agent::Descriptor, e, &metrics))?;
    metrics.add(Agent::Descriptor, &usage);
    if !observation.is_critical {
        return Ok(PipelineResult::Halted { observation, metrics });
    }

    let (plan, usage) = agents::plan(&observation, backend, &ctx).map_err(|e| fail(Agent::Planner, e, &metrics))?;
    metrics.add(Agent::Planner, &usage);

    let mut subtrees = Vec::with_capacity(plan.len());
    let mut repaired = Vec::new();
    for goal in &plan.goals {
        let result = agents::generate(goal, palette, &observation.scene_description, backend, &ctx);
        let (generated, usage) = match result {
            Ok(ok) => ok,
            Err(e) => return Err(fail(Agent::Generator, e, &metrics)),
        };
        metrics.add(Agent::Generator, &usage);
        if generated.repaired {
            repaired.push(goal.index);
        }
        subtrees.push(generated.tree);
    }
    let tree = concat_under_sequence(subtrees, "recovery").map_err(PipelineError::Assemble)?;
    Ok(PipelineResult::Completed(PipelineOutput {
        observation,
        plan,
        tree,
        repaired,
        metrics,
    }))
}

/// Runs the pipeline on a worker thread; the caller waits at most `timeout`.
pub fn invoke_pipeline_with_timeout(
    snapshot: SceneSnapshot,
    palette: NodePalette,
    backend: Arc<dyn Backend>,
    ctx: AgentContext,
    timeout: Duration,
) -> Result<PipelineResult, PipelineError> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let _ = tx.send(invoke_pipeline(&snapshot, &palette, backend.as_ref(), &ctx));
    });
    match rx.recv_timeout(timeout) {
        Ok(result) => result,
        Err(mpsc::RecvTimeoutError::Timeout) => Err(PipelineError::Timeout(timeout)),
        Err(mpsc::RecvTimeoutError::Disconnected) => Err(PipelineError::WorkerLost),
    }
}
