#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use pavement::bt::{
    Blackboard, BehaviorTree, BtNode, Leaf, LeafExecutor, LeafKind, NodePath, TickStatus, UnknownLeaf,
};
use rand::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

/// Leaves named `L<k>` report the status assigned in the table.
pub struct StubExecutor {
    pub table: HashMap<String, TickStatus>,
    pub log: Vec<String>,
}

impl StubExecutor {
    pub fn new(table: HashMap<String, TickStatus>) -> Self {
        StubExecutor { table, log: Vec::new() }
    }
}

impl LeafExecutor for StubExecutor {
    type Error = UnknownLeaf;

    fn execute(
        &mut self,
        kind: LeafKind,
        leaf: &Leaf,
        path: &NodePath,
        _bb: &mut Blackboard,
    ) -> Result<TickStatus, UnknownLeaf> {
        self.log.push(leaf.id.clone());
        self.table.get(&leaf.id).copied().ok_or(UnknownLeaf {
            id: leaf.id.clone(),
            kind,
            path: path.clone(),
        })
    }
}

pub fn random_status(rng: &mut impl Rng) -> TickStatus {
    match rng.gen_range(0..3) {
        0 => TickStatus::Success,
        1 => TickStatus::Failure,
        _ => TickStatus::Running,
    }
}

/// Random tree of depth <= `max_depth` over `n_leaf_ids` distinct stub leaves.
pub fn random_node(rng: &mut impl Rng, max_depth: usize, n_leaf_ids: usize) -> BtNode {
    if max_depth == 0 || rng.gen_bool(0.3) {
        let id = format!("L{}", rng.gen_range(0..n_leaf_ids));
        return if rng.gen_bool(0.5) {
            BtNode::action(id)
        } else {
            BtNode::condition(id)
        };
    }
    let n = rng.gen_range(1..=4);
    let children: Vec<BtNode> = (0..n).map(|_| random_node(rng, max_depth - 1, n_leaf_ids)).collect();
    match rng.gen_range(0..3) {
        0 => BtNode::Sequence(children),
        1 => BtNode::Fallback(children),
        _ => BtNode::Parallel {
            success_threshold: rng.gen_range(1..=n),
            failure_threshold: rng.gen_range(1..=n),
            children,
        },
    }
}

pub fn random_tree(rng: &mut impl Rng, max_depth: usize, n_leaf_ids: usize) -> BehaviorTree {
    BehaviorTree::new("random", random_node(rng, max_depth, n_leaf_ids)).expect("generator emits well-formed trees")
}

pub fn random_table(rng: &mut impl Rng, n_leaf_ids: usize) -> HashMap<String, TickStatus> {
    (0..n_leaf_ids).map(|k| (format!("L{k}"), random_status(rng))).collect()
}

/// Reference interpreter written as a small-step machine with an explicit
/// continuation stack, independent of the recursive engine.
///
/// Returns the root status and the order in which leaves were executed.
pub fn reference_tick(root: &BtNode, table: &HashMap<String, TickStatus>) -> (TickStatus, Vec<String>) {
    enum Frame<'a> {
        Visit(&'a BtNode),
        // composite, index of next child to visit, success count, failure count
        Resume(&'a BtNode, usize, usize, usize),
    }
    let mut log = Vec::new();
    let mut stack = vec![Frame::Visit(root)];
    let mut last: Option<TickStatus> = None;
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Visit(node) => match node {
                BtNode::Action(l) | BtNode::Condition(l) => {
                    log.push(l.id.clone());
                    last = Some(table[&l.id]);
                }
                _ => {
                    last = None;
                    stack.push(Frame::Resume(node, 0, 0, 0));
                }
            },
            Frame::Resume(node, next, ok, bad) => {
                let (ok, bad) = match last {
                    Some(TickStatus::Success) => (ok + 1, bad),
                    Some(TickStatus::Failure) => (ok, bad + 1),
                    _ => (ok, bad),
                };
                let kids = node.children();
                // decide whether the previous child ended this composite
                let verdict = match (node, last) {
                    (BtNode::Sequence(_), Some(TickStatus::Failure)) => Some(TickStatus::Failure),
                    (BtNode::Sequence(_), Some(TickStatus::Running)) => Some(TickStatus::Running),
                    (BtNode::Fallback(_), Some(TickStatus::Success)) => Some(TickStatus::Success),
                    (BtNode::Fallback(_), Some(TickStatus::Running)) => Some(TickStatus::Running),
                    _ => None,
                };
                if let Some(v) = verdict {
                    last = Some(v);
                    continue;
                }
                if next < kids.len() {
                    stack.push(Frame::Resume(node, next + 1, ok, bad));
                    stack.push(Frame::Visit(&kids[next]));
                    last = None;
                    continue;
                }
                last = Some(match node {
                    BtNode::Sequence(_) => TickStatus::Success,
                    BtNode::Fallback(_) => TickStatus::Failure,
                    BtNode::Parallel {
                        success_threshold,
                        failure_threshold,
                        ..
                    } => {
                        if bad >= *failure_threshold {
                            TickStatus::Failure
                        } else if ok >= *success_threshold {
                            TickStatus::Success
                        } else {
                            TickStatus::Running
                        }
                    }
                    _ => unreachable!(),
                });
            }
        }
    }
    (last.expect("root produced a status"), log)
}
