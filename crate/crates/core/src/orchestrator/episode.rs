//! The deterministic control loop shared by baseline and generated trees.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{BehaviorTree, Blackboard, TickStatus, Value};
use crate::sim::{ExecError, SimExecutor, SimParams};
use crate::{Scenario, World};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("trigger policy invalid: {0}")]
    Invalid(&'static str),
}

/// Converts a prolonged lack of goal progress into Failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerPolicy {
    pub stall_timeout: f64,
    pub progress_epsilon: f64,
    pub window: f64,
}

impl Default for TriggerPolicy {
    fn default() -> Self {
        TriggerPolicy {
            stall_timeout: 10.0,
            progress_epsilon: 0.1,
            window: 2.0,
        }
    }
}

impl TriggerPolicy {
    pub fn check(&self) -> Result<(), PolicyError> {
        if self.stall_timeout.is_nan() || self.stall_timeout <= 0.0 {
            return Err(PolicyError::Invalid("stall_timeout must be positive"));
        }
        if self.progress_epsilon.is_nan() || self.progress_epsilon < 0.0 {
            return Err(PolicyError::Invalid("progress_epsilon must be non-negative"));
        }
        if !(self.window > 0.0 && self.window <= self.stall_timeout) {
            return Err(PolicyError::Invalid("window must be positive and at most stall_timeout"));
        }
        Ok(())
    }

    /// Consecutive stalled windows that trigger Failure.
    pub fn windows(&self) -> usize {
        (self.stall_timeout / self.window).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl Sample {
    fn of(world: &World) -> Self {
        Sample {
            t: world.time,
            x: world.ego.pose.x,
            y: world.ego.pose.y,
            theta: world.ego.pose.heading,
            v: world.ego.speed,
        }
    }
}

/// Terminal status of one tree run and why it ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Tree,
    Stalled,
    TimeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeRun {
    pub status: TickStatus,
    pub termination: Termination,
    pub ticks: usize,
}

/// One vehicle's life across baseline and recovery, with its trajectory.
#[derive(Debug, Clone)]
pub struct Episode {
    exec: SimExecutor,
    trajectory: Vec<Sample>,
}

fn goal_blackboard(world: &World) -> Blackboard {
    let mut bb = Blackboard::new();
    bb.set("goal", Value::Pose(world.goal.to_array()));
    bb
}

impl Episode {
    pub fn new(scenario: &Scenario, params: SimParams) -> Self {
        let exec = SimExecutor::new(scenario.world.clone(), params);
        let trajectory = vec![Sample::of(exec.world())];
        Episode { exec, trajectory }
    }

    pub fn world(&self) -> &World {
        self.exec.world()
    }

    pub fn params(&self) -> &SimParams {
        self.exec.params()
    }

    pub fn trajectory(&self) -> &[Sample] {
        &self.trajectory
    }

    /// Ticks `tree` with a fresh blackboard until it ends, stalls or runs out of time.
    pub fn run_tree(&mut self, tree: &BehaviorTree, policy: Option<&TriggerPolicy>, max_time: f64) -> Result<TreeRun, ExecError> {
        let mut bb = goal_blackboard(self.exec.world());
        let dt = self.exec.params().dt;
        let window_ticks = policy.map_or(usize::MAX, |p| ((p.window / dt).round() as usize).max(1));
        let needed = policy.map_or(usize::MAX, TriggerPolicy::windows);
        let epsilon = policy.map_or(0.0, |p| p.progress_epsilon);
        let start = self.exec.world().time;
        let mut mark = self.exec.world().goal_distance();
        let mut stalled = 0;
        let mut ticks = 0;
        loop {
            let status = self.exec.tick_and_step(tree, &mut bb)?;
            ticks += 1;
            if status.is_terminal() {
                return Ok(TreeRun {
                    status,
                    termination: Termination::Tree,
                    ticks,
                });
            }
            self.trajectory.push(Sample::of(self.exec.world()));
            if ticks % window_ticks == 0 {
                let d = self.exec.world().goal_distance();
                if mark - d < epsilon {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                mark = d;
                if stalled >= needed {
                    return Ok(TreeRun {
                        status: TickStatus::Failure,
                        termination: Termination::Stalled,
                        ticks,
                    });
                }
            }
            if self.exec.world().time - start >= max_time {
                return Ok(TreeRun {
                    status: TickStatus::Failure,
                    termination: Termination::TimeLimit,
                    ticks,
                });
            }
        }
    }

    /// Runs the baseline under the stall detector.
    pub fn run_baseline(&mut self, baseline: &BehaviorTree, policy: &TriggerPolicy, max_time: f64) -> Result<TreeRun, ExecError> {
        self.run_tree(baseline, Some(policy), max_time)
    }

    /// Runs a generated tree from the current state; Success also requires reaching the goal.
    pub fn execute_generated(&mut self, tree: &BehaviorTree, max_time: f64) -> Result<TreeRun, ExecError> {
        let mut run = self.run_tree(tree, None, max_time)?;
        if run.status == TickStatus::Success && self.world().goal_distance() > self.params().goal_tolerance {
            run.status = TickStatus::Failure;
        }
        Ok(run)
    }
}

pub const BASELINE_XML: &str = include_str!("../../assets/trees/baseline.xml");

/// The navigation tree that runs before any recovery.
pub fn baseline_tree() -> BehaviorTree {
    crate::bt::parse_bt_xml(BASELINE_XML).expect("bundled baseline tree")
}
