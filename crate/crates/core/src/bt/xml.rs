//! XML reading and canonical writing.
//!
//! Canonical form: two-space indentation, one element per line, leaf `id`
//! first followed by parameters sorted by name, Parallel thresholds always
//! written, a trailing newline and no XML declaration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

use super::{BehaviorTree, BtNode, Leaf};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum XmlError {
    #[error("malformed XML at byte {position}: {detail}")]
    Malformed { position: u64, detail: String },
    #[error("schema error: {0}")]
    Schema(String),
}

fn schema(msg: impl Into<String>) -> XmlError {
    XmlError::Schema(msg.into())
}

#[derive(Debug)]
enum Element {
    Root { name: String },
    Sequence,
    Fallback,
    Parallel {
        success: Option<usize>,
        failure: Option<usize>,
    },
    Action(Leaf),
    Condition(Leaf),
}

struct Frame {
    element: Element,
    tag: String,
    children: Vec<BtNode>,
}

fn parse_threshold(tag: &str, name: &str, raw: &str) -> Result<usize, XmlError> {
    raw.trim()
        .parse::<usize>()
        .map_err(|_| schema(format!("<{tag}> {name}=\"{raw}\" is not a non-negative integer")))
}

fn read_element(start: &BytesStart<'_>) -> Result<(String, Element), XmlError> {
    let tag = String::from_utf8_lossy(start.name().as_ref()).into_owned();
    let mut attrs: Vec<(String, String)> = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| XmlError::Malformed {
            position: 0,
            detail: e.to_string(),
        })?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr
            .unescape_value()
            .map_err(|e| XmlError::Malformed {
                position: 0,
                detail: e.to_string(),
            })?
            .into_owned();
        attrs.push((key, value));
    }
    let no_attrs = |attrs: &[(String, String)]| -> Result<(), XmlError> {
        match attrs.first() {
            Some((k, _)) => Err(schema(format!("<{tag}> does not accept attribute `{k}`"))),
            None => Ok(()),
        }
    };
    let element = match tag.as_str() {
        "BehaviorTree" => {
            let mut name = None;
            for (k, v) in attrs {
                match k.as_str() {
                    "name" => name = Some(v),
                    _ => return Err(schema(format!("<BehaviorTree> does not accept attribute `{k}`"))),
                }
            }
            match name {
                Some(n) if !n.is_empty() => Element::Root { name: n },
                _ => return Err(schema("<BehaviorTree> requires a non-empty name attribute")),
            }
        }
        "Sequence" => {
            no_attrs(&attrs)?;
            Element::Sequence
        }
        "Fallback" | "Selector" => {
            no_attrs(&attrs)?;
            Element::Fallback
        }
        "Parallel" => {
            let (mut success, mut failure) = (None, None);
            for (k, v) in attrs {
                match k.as_str() {
                    "success_threshold" => success = Some(parse_threshold(&tag, &k, &v)?),
                    "failure_threshold" => failure = Some(parse_threshold(&tag, &k, &v)?),
                    _ => return Err(schema(format!("<Parallel> does not accept attribute `{k}`"))),
                }
            }
            Element::Parallel { success, failure }
        }
        "Action" | "Condition" => {
            let mut id = None;
            let mut params = BTreeMap::new();
            for (k, v) in attrs {
                if k == "id" {
                    id = Some(v);
                } else {
                    params.insert(k, v);
                }
            }
            let id = match id {
                Some(id) if !id.is_empty() => id,
                _ => return Err(schema(format!("<{tag}> requires a non-empty id attribute"))),
            };
            let leaf = Leaf { id, params };
            if tag == "Action" {
                Element::Action(leaf)
            } else {
                Element::Condition(leaf)
            }
        }
        other => return Err(schema(format!("unknown element <{other}>"))),
    };
    Ok((tag, element))
}

fn finish(frame: Frame) -> Result<BtNode, XmlError> {
    let Frame {
        element,
        tag,
        children,
    } = frame;
    let node = match element {
        Element::Root { .. } => unreachable!("root handled by caller"),
        Element::Action(leaf) | Element::Condition(leaf) if !children.is_empty() => {
            return Err(schema(format!("leaf <{tag} id=\"{}\"> cannot have children", leaf.id)))
        }
        Element::Action(leaf) => BtNode::Action(leaf),
        Element::Condition(leaf) => BtNode::Condition(leaf),
        _ if children.is_empty() => return Err(schema(format!("composite <{tag}> has no children"))),
        Element::Sequence => BtNode::Sequence(children),
        Element::Fallback => BtNode::Fallback(children),
        Element::Parallel { success, failure } => {
            let n = children.len();
            let success_threshold = success.unwrap_or(n);
            let failure_threshold = failure.unwrap_or(1);
            for (name, v) in [
                ("success_threshold", success_threshold),
                ("failure_threshold", failure_threshold),
            ] {
                if v == 0 || v > n {
                    return Err(schema(format!(
                        "<Parallel> {name}={v} must be within 1..={n} (child count)"
                    )));
                }
            }
            BtNode::Parallel {
                success_threshold,
                failure_threshold,
                children,
            }
        }
    };
    Ok(node)
}

/// Parses a `<BehaviorTree name="...">` document holding exactly one node element.
pub fn parse_bt_xml(text: &str) -> Result<BehaviorTree, XmlError> {
    let mut reader = Reader::from_str(text);
    let mut stack: Vec<Frame> = Vec::new();
    let mut tree: Option<BehaviorTree> = None;

    let malformed = |reader: &Reader<&[u8]>, detail: String| XmlError::Malformed {
        position: reader.buffer_position(),
        detail,
    };

    loop {
        let event = reader
            .read_event()
            .map_err(|e| malformed(&reader, e.to_string()))?;
        match event {
            Event::Start(ref start) | Event::Empty(ref start) => {
                let is_empty = matches!(event, Event::Empty(_));
                if tree.is_some() {
                    return Err(schema("content after the closing </BehaviorTree>"));
                }
                let (tag, element) = read_element(start)?;
                match (&element, stack.is_empty()) {
                    (Element::Root { .. }, false) => {
                        return Err(schema("<BehaviorTree> cannot be nested"))
                    }
                    (Element::Root { .. }, true) if is_empty => {
                        return Err(schema("<BehaviorTree> must contain one node element"))
                    }
                    (Element::Root { .. }, true) => {}
                    (_, true) => return Err(schema(format!("document root must be <BehaviorTree>, found <{tag}>"))),
                    (_, false) => {}
                }
                let frame = Frame {
                    element,
                    tag,
                    children: Vec::new(),
                };
                if is_empty {
                    let node = finish(frame)?;
                    stack.last_mut().expect("non-root has parent").children.push(node);
                } else {
                    stack.push(frame);
                }
            }
            Event::End(_) => {
                let frame = stack.pop().ok_or_else(|| malformed(&reader, "unbalanced end tag".into()))?;
                if let Element::Root { name } = frame.element {
                    let mut children = frame.children;
                    if children.len() != 1 {
                        return Err(schema(format!(
                            "<BehaviorTree> must contain exactly one node element, found {}",
                            children.len()
                        )));
                    }
                    let root = children.pop().expect("one child");
                    tree = Some(BehaviorTree::new(name, root).map_err(|e| schema(e.to_string()))?);
                } else {
                    let node = finish(frame)?;
                    stack.last_mut().expect("root frame present").children.push(node);
                }
            }
            Event::Text(t) => {
                let raw = t.unescape().map_err(|e| malformed(&reader, e.to_string()))?;
                if !raw.trim().is_empty() {
                    return Err(schema(format!("unexpected text content `{}`", raw.trim())));
                }
            }
            Event::CData(_) => return Err(schema("CDATA sections are not part of the format")),
            Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Eof => break,
        }
    }
    if !stack.is_empty() {
        return Err(XmlError::Malformed {
            position: reader.buffer_position(),
            detail: format!("unclosed element <{}>", stack.last().map(|f| f.tag.as_str()).unwrap_or("?")),
        });
    }
    tree.ok_or_else(|| schema("document has no <BehaviorTree> element"))
}

fn escape_attr(value: &str, out: &mut String) {
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
}

fn write_node(node: &BtNode, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    match node {
        BtNode::Action(leaf) | BtNode::Condition(leaf) => {
            let _ = write!(out, "{indent}<{} id=\"", node.kind_name());
            escape_attr(&leaf.id, out);
            out.push('"');
            for (k, v) in &leaf.params {
                let _ = write!(out, " {k}=\"");
                escape_attr(v, out);
                out.push('"');
            }
            out.push_str("/>\n");
        }
        BtNode::Parallel {
            success_threshold,
            failure_threshold,
            children,
        } => {
            let _ = writeln!(
                out,
                "{indent}<Parallel success_threshold=\"{success_threshold}\" failure_threshold=\"{failure_threshold}\">"
            );
            for c in children {
                write_node(c, depth + 1, out);
            }
            let _ = writeln!(out, "{indent}</Parallel>");
        }
        BtNode::Sequence(children) | BtNode::Fallback(children) => {
            let tag = node.kind_name();
            let _ = writeln!(out, "{indent}<{tag}>");
            for c in children {
                write_node(c, depth + 1, out);
            }
            let _ = writeln!(out, "{indent}</{tag}>");
        }
    }
}

/// Writes the canonical XML form of a tree.
pub fn serialize_bt(tree: &BehaviorTree) -> String {
    let mut out = String::from("<BehaviorTree name=\"");
    escape_attr(tree.name(), &mut out);
    out.push_str("\">\n");
    write_node(tree.root(), 1, &mut out);
    out.push_str("</BehaviorTree>\n");
    out
}

/// Re-emits a document in canonical form.
pub fn canonicalize(text: &str) -> Result<String, XmlError> {
    parse_bt_xml(text).map(|t| serialize_bt(&t))
}
