use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BehaviorTree, Blackboard, BtNode, Leaf, LeafKind, TickStatus};

/// Child-index path from the root; the root itself is the empty path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn push(&mut self, i: usize) {
        self.0.push(i);
    }

    pub fn pop(&mut self) {
        self.0.pop();
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(".")?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

/// Raised by executors that cannot resolve a leaf id.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} leaf `{id}` at {path}")]
pub struct UnknownLeaf {
    pub id: String,
    pub kind: LeafKind,
    pub path: NodePath,
}

/// Runs leaf nodes on behalf of the tick engine.
///
/// `path` identifies the leaf within the tree, so executors can keep
/// per-node progress for multi-tick actions.
pub trait LeafExecutor {
    type Error;

    fn execute(
        &mut self,
        kind: LeafKind,
        leaf: &Leaf,
        path: &NodePath,
        blackboard: &mut Blackboard,
    ) -> Result<TickStatus, Self::Error>;
}

impl<E: LeafExecutor + ?Sized> LeafExecutor for &mut E {
    type Error = E::Error;

    fn execute(
        &mut self,
        kind: LeafKind,
        leaf: &Leaf,
        path: &NodePath,
        blackboard: &mut Blackboard,
    ) -> Result<TickStatus, Self::Error> {
        (**self).execute(kind, leaf, path, blackboard)
    }
}

/// Ticks the tree once with memory-less composite semantics.
///
/// Sequence and Fallback restart from their first child on every tick and
/// stop at the first child that does not continue them. Parallel ticks all
/// children; when both thresholds are reached in the same tick, Failure wins.
pub fn tick<E: LeafExecutor>(
    tree: &BehaviorTree,
    blackboard: &mut Blackboard,
    executor: &mut E,
) -> Result<TickStatus, E::Error> {
    tick_node(tree.root(), &mut NodePath::root(), blackboard, executor)
}

fn tick_node<E: LeafExecutor>(
    node: &BtNode,
    path: &mut NodePath,
    bb: &mut Blackboard,
    exec: &mut E,
) -> Result<TickStatus, E::Error> {
    match node {
        BtNode::Action(leaf) => exec.execute(LeafKind::Action, leaf, path, bb),
        BtNode::Condition(leaf) => exec.execute(LeafKind::Condition, leaf, path, bb),
        BtNode::Sequence(children) => {
            for (i, child) in children.iter().enumerate() {
                path.push(i);
                let status = tick_node(child, path, bb, exec);
                path.pop();
                match status? {
                    TickStatus::Success => continue,
                    other => return Ok(other),
                }
            }
            Ok(TickStatus::Success)
        }
        BtNode::Fallback(children) => {
            for (i, child) in children.iter().enumerate() {
                path.push(i);
                let status = tick_node(child, path, bb, exec);
                path.pop();
                match status? {
                    TickStatus::Failure => continue,
                    other => return Ok(other),
                }
            }
            Ok(TickStatus::Failure)
        }
        BtNode::Parallel {
            success_threshold,
            failure_threshold,
            children,
        } => {
            let (mut ok, mut failed) = (0, 0);
            for (i, child) in children.iter().enumerate() {
                path.push(i);
                let status = tick_node(child, path, bb, exec);
                path.pop();
                match status? {
                    TickStatus::Success => ok += 1,
                    TickStatus::Failure => failed += 1,
                    TickStatus::Running => {}
                }
            }
            Ok(if failed >= *failure_threshold {
                TickStatus::Failure
            } else if ok >= *success_threshold {
                TickStatus::Success
            } else {
                TickStatus::Running
            })
        }
    }
}
