use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BehaviorTree, BtNode, LeafKind, NodePath};

/// Contract for one palette leaf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub kind: LeafKind,
    #[serde(default)]
    pub required_params: Vec<String>,
    #[serde(default)]
    pub optional_params: Vec<String>,
}

#[derive(Debug, Error)]
pub enum PaletteError {
    #[error("palette entry `{id}` lists `{param}` as both required and optional")]
    OverlappingParams { id: String, param: String },
    #[error("palette entry `{id}` lists parameter `{param}` twice")]
    DuplicateParam { id: String, param: String },
    #[error("palette JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// The closed set of leaves a tree may use.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct NodePalette {
    entries: BTreeMap<String, PaletteEntry>,
}

impl NodePalette {
    pub fn new(entries: impl IntoIterator<Item = (String, PaletteEntry)>) -> Result<Self, PaletteError> {
        let entries: BTreeMap<_, _> = entries.into_iter().collect();
        for (id, e) in &entries {
            let mut seen = BTreeSet::new();
            for p in &e.required_params {
                if !seen.insert(p) {
                    return Err(PaletteError::DuplicateParam { id: id.clone(), param: p.clone() });
                }
            }
            for p in &e.optional_params {
                if e.required_params.contains(p) {
                    return Err(PaletteError::OverlappingParams { id: id.clone(), param: p.clone() });
                }
                if !seen.insert(p) {
                    return Err(PaletteError::DuplicateParam { id: id.clone(), param: p.clone() });
                }
            }
        }
        Ok(NodePalette { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, PaletteError> {
        let raw: BTreeMap<String, PaletteEntry> = serde_json::from_str(text)?;
        Self::new(raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("palette serializes")
    }

    pub fn get(&self, id: &str) -> Option<&PaletteEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &PaletteEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    UnknownLeaf,
    MissingParam,
    UnknownParam,
    BadArity,
    BadThreshold,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub node_path: NodePath,
    pub code: ViolationCode,
    pub detail: String,
}

/// Outcome of checking a tree against a palette. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, code: ViolationCode) -> usize {
        self.violations.iter().filter(|v| v.code == code).count()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid: no violations");
        }
        for v in &self.violations {
            writeln!(f, "{} at {}: {}", v.code, v.node_path, v.detail)?;
        }
        Ok(())
    }
}

/// Lists every leaf that is not in the palette, is missing a required
/// parameter, or carries a parameter the palette does not declare.
///
/// Composites only fail on arity or thresholds, which well-formed trees
/// never do; the check is repeated here so the report is self-contained.
pub fn validate_against_palette(tree: &BehaviorTree, palette: &NodePalette) -> ValidationReport {
    let mut violations = Vec::new();
    tree.root().walk(&mut |path, node| {
        let push = |v: &mut Vec<Violation>, code, detail: String| {
            v.push(Violation {
                node_path: path.clone(),
                code,
                detail,
            })
        };
        match node {
            BtNode::Action(leaf) | BtNode::Condition(leaf) => {
                let kind = if matches!(node, BtNode::Action(_)) {
                    LeafKind::Action
                } else {
                    LeafKind::Condition
                };
                let Some(entry) = palette.get(&leaf.id) else {
                    push(&mut violations, ViolationCode::UnknownLeaf, format!("{kind} `{}` is not in the palette", leaf.id));
                    return;
                };
                if entry.kind != kind {
                    push(
                        &mut violations,
                        ViolationCode::UnknownLeaf,
                        format!("`{}` is registered as {}, used as {kind}", leaf.id, entry.kind),
                    );
                    return;
                }
                for p in &entry.required_params {
                    if !leaf.params.contains_key(p) {
                        push(&mut violations, ViolationCode::MissingParam, format!("`{}` requires `{p}`", leaf.id));
                    }
                }
                for p in leaf.params.keys() {
                    if !entry.required_params.contains(p) && !entry.optional_params.contains(p) {
                        push(&mut violations, ViolationCode::UnknownParam, format!("`{}` does not take `{p}`", leaf.id));
                    }
                }
            }
            BtNode::Parallel {
                success_threshold,
                failure_threshold,
                children,
            } => {
                if children.is_empty() {
                    push(&mut violations, ViolationCode::BadArity, "Parallel has no children".into());
                }
                for (name, v) in [("success_threshold", success_threshold), ("failure_threshold", failure_threshold)] {
                    if *v == 0 || *v > children.len() {
                        push(
                            &mut violations,
                            ViolationCode::BadThreshold,
                            format!("{name}={v} outside 1..={}", children.len()),
                        );
                    }
                }
            }
            BtNode::Sequence(c) | BtNode::Fallback(c) => {
                if c.is_empty() {
                    push(&mut violations, ViolationCode::BadArity, format!("{} has no children", node.kind_name()));
                }
            }
        }
    });
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::parse_bt_xml;

    fn palette() -> NodePalette {
        NodePalette::from_json(
            r#"{
                "Stop": {"kind": "Action"},
                "FollowPath": {"kind": "Action", "required_params": ["path_key"], "optional_params": ["speed_mps"]},
                "GoalReached": {"kind": "Condition", "required_params": ["tolerance_m"]}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn valid_tree_has_empty_report() {
        let t = parse_bt_xml(r#"<BehaviorTree name="t"><Fallback><Condition id="GoalReached" tolerance_m="1"/><Action id="FollowPath" path_key="p"/></Fallback></BehaviorTree>"#).unwrap();
        assert!(validate_against_palette(&t, &palette()).is_valid());
    }

    #[test]
    fn unknown_leaf() {
        let t = parse_bt_xml(r#"<BehaviorTree name="t"><Sequence><Action id="Stop"/><Action id="Teleport"/></Sequence></BehaviorTree>"#).unwrap();
        let r = validate_against_palette(&t, &palette());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].code, ViolationCode::UnknownLeaf);
        assert_eq!(r.violations[0].node_path, NodePath(vec![1]));
    }

    #[test]
    fn missing_and_unknown_params() {
        let t = parse_bt_xml(r#"<BehaviorTree name="t"><Sequence><Action id="FollowPath"/><Action id="Stop" now="1"/></Sequence></BehaviorTree>"#).unwrap();
        let r = validate_against_palette(&t, &palette());
        assert_eq!(r.count(ViolationCode::MissingParam), 1);
        assert_eq!(r.count(ViolationCode::UnknownParam), 1);
        assert_eq!(r.violations.len(), 2);
    }

    #[test]
    fn kind_mismatch_is_reported() {
        let t = parse_bt_xml(r#"<BehaviorTree name="t"><Condition id="Stop"/></BehaviorTree>"#).unwrap();
        assert_eq!(validate_against_palette(&t, &palette()).count(ViolationCode::UnknownLeaf), 1);
    }

    #[test]
    fn rejects_overlapping_param_lists() {
        let err = NodePalette::from_json(r#"{"X": {"kind": "Action", "required_params": ["a"], "optional_params": ["a"]}}"#);
        assert!(matches!(err, Err(PaletteError::OverlappingParams { .. })));
    }
}
