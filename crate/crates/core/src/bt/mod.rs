//! Behavior-tree data model, XML format, palette validation and the tick engine.

mod blackboard;
mod palette;
mod tick;
mod xml;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blackboard::{Blackboard, Value};
pub use palette::{
    validate_against_palette, NodePalette, PaletteEntry, PaletteError, ValidationReport,
    Violation, ViolationCode,
};
pub use tick::{tick, LeafExecutor, NodePath, UnknownLeaf};
pub use xml::{canonicalize, parse_bt_xml, serialize_bt, XmlError};

/// Result of ticking a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TickStatus {
    Success,
    Failure,
    Running,
}

impl TickStatus {
    pub fn is_terminal(self) -> bool {
        !matches!(self, TickStatus::Running)
    }
}

impl fmt::Display for TickStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TickStatus::Success => "Success",
            TickStatus::Failure => "Failure",
            TickStatus::Running => "Running",
        };
        f.write_str(s)
    }
}

/// Leaf flavour. Actions may run over several ticks; conditions answer immediately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LeafKind {
    Action,
    Condition,
}

impl fmt::Display for LeafKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeafKind::Action => f.write_str("Action"),
            LeafKind::Condition => f.write_str("Condition"),
        }
    }
}

/// An executable leaf: palette id plus string parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Leaf {
    pub id: String,
    pub params: BTreeMap<String, String>,
}

impl Leaf {
    pub fn new(id: impl Into<String>) -> Self {
        Leaf {
            id: id.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(name.into(), value.into());
        self
    }
}

/// A behavior-tree node.
///
/// Leaves cannot have children by construction. Composite arity and
/// parallel thresholds are checked by [`BtNode::check`], which every
/// constructor of [`BehaviorTree`] runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BtNode {
    Sequence(Vec<BtNode>),
    /// Also accepted as `Selector` on input.
    Fallback(Vec<BtNode>),
    Parallel {
        success_threshold: usize,
        failure_threshold: usize,
        children: Vec<BtNode>,
    },
    Action(Leaf),
    Condition(Leaf),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("{kind} at {path} has no children")]
    EmptyComposite { kind: &'static str, path: NodePath },
    #[error("parallel at {path}: threshold {name}={value} outside 1..={children}")]
    BadThreshold {
        path: NodePath,
        name: &'static str,
        value: usize,
        children: usize,
    },
    #[error("leaf at {path} has an empty id")]
    EmptyLeafId { path: NodePath },
    #[error("tree name is empty")]
    EmptyName,
    #[error("cannot concatenate an empty list of subtrees (the plan has no sub-goals)")]
    EmptyPlan,
}

impl BtNode {
    pub fn action(id: impl Into<String>) -> Self {
        BtNode::Action(Leaf::new(id))
    }

    pub fn condition(id: impl Into<String>) -> Self {
        BtNode::Condition(Leaf::new(id))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            BtNode::Sequence(_) => "Sequence",
            BtNode::Fallback(_) => "Fallback",
            BtNode::Parallel { .. } => "Parallel",
            BtNode::Action(_) => "Action",
            BtNode::Condition(_) => "Condition",
        }
    }

    pub fn children(&self) -> &[BtNode] {
        match self {
            BtNode::Sequence(c) | BtNode::Fallback(c) => c,
            BtNode::Parallel { children, .. } => children,
            BtNode::Action(_) | BtNode::Condition(_) => &[],
        }
    }

    pub fn leaf(&self) -> Option<(LeafKind, &Leaf)> {
        match self {
            BtNode::Action(l) => Some((LeafKind::Action, l)),
            BtNode::Condition(l) => Some((LeafKind::Condition, l)),
            _ => None,
        }
    }

    /// Checks the structural invariants of this node and its descendants.
    pub fn check(&self) -> Result<(), TreeError> {
        self.check_at(&mut NodePath::root())
    }

    fn check_at(&self, path: &mut NodePath) -> Result<(), TreeError> {
        match self {
            BtNode::Action(l) | BtNode::Condition(l) => {
                if l.id.is_empty() {
                    return Err(TreeError::EmptyLeafId { path: path.clone() });
                }
                return Ok(());
            }
            BtNode::Parallel {
                success_threshold,
                failure_threshold,
                children,
            } => {
                for (name, value) in [
                    ("success_threshold", *success_threshold),
                    ("failure_threshold", *failure_threshold),
                ] {
                    if !children.is_empty() && (value == 0 || value > children.len()) {
                        return Err(TreeError::BadThreshold {
                            path: path.clone(),
                            name,
                            value,
                            children: children.len(),
                        });
                    }
                }
            }
            _ => {}
        }
        let children = self.children();
        if children.is_empty() {
            return Err(TreeError::EmptyComposite {
                kind: self.kind_name(),
                path: path.clone(),
            });
        }
        for (i, child) in children.iter().enumerate() {
            path.push(i);
            child.check_at(path)?;
            path.pop();
        }
        Ok(())
    }

    /// Depth-first visit of every node with its child-index path.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&NodePath, &'a BtNode)) {
        fn go<'a>(node: &'a BtNode, path: &mut NodePath, f: &mut impl FnMut(&NodePath, &'a BtNode)) {
            f(path, node);
            for (i, c) in node.children().iter().enumerate() {
                path.push(i);
                go(c, path, f);
                path.pop();
            }
        }
        go(self, &mut NodePath::root(), f);
    }

    pub fn leaves(&self) -> Vec<(LeafKind, &Leaf)> {
        let mut out = Vec::new();
        self.walk(&mut |_, n| {
            if let Some(l) = n.leaf() {
                out.push(l);
            }
        });
        out
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(BtNode::node_count).sum::<usize>()
    }
}

/// A named, well-formed behavior tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BehaviorTree {
    name: String,
    root: BtNode,
}

impl BehaviorTree {
    pub fn new(name: impl Into<String>, root: BtNode) -> Result<Self, TreeError> {
        let name = name.into();
        if name.is_empty() {
            return Err(TreeError::EmptyName);
        }
        root.check()?;
        Ok(BehaviorTree { name, root })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root(&self) -> &BtNode {
        &self.root
    }

    pub fn into_root(self) -> BtNode {
        self.root
    }
}

/// Places each subtree's root, in order, under a new `Sequence` root.
pub fn concat_under_sequence(
    subtrees: impl IntoIterator<Item = BehaviorTree>,
    name: impl Into<String>,
) -> Result<BehaviorTree, TreeError> {
    let children: Vec<BtNode> = subtrees.into_iter().map(BehaviorTree::into_root).collect();
    if children.is_empty() {
        return Err(TreeError::EmptyPlan);
    }
    BehaviorTree::new(name, BtNode::Sequence(children))
}
