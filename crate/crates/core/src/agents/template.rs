//! Markdown prompt templates with `{placeholder}` slots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("placeholder `{{{0}}}` has no binding")]
    UnboundPlaceholder(String),
    #[error("template is malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub input_summary: String,
    pub exemplar_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub role_header: String,
    pub sections: Vec<Section>,
    pub few_shots: Vec<FewShot>,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("valid regex"))
}

const EXAMPLE_PREFIX: &str = "### Example:";

impl PromptTemplate {
    /// Reads `# header`, then `## Section` blocks, then `### Example: summary` blocks.
    pub fn from_markdown(text: &str) -> Result<Self, TemplateError> {
        enum Block {
            Header,
            Section(String),
            Example(String),
        }
        let mut role_header = None::<String>;
        let mut sections = Vec::new();
        let mut few_shots = Vec::new();
        let mut current: Option<(Block, Vec<&str>)> = None;

        let flush = |block: Option<(Block, Vec<&str>)>,
                         role_header: &mut Option<String>,
                         sections: &mut Vec<Section>,
                         few_shots: &mut Vec<FewShot>| {
            if let Some((kind, lines)) = block {
                let body = lines.join("\n").trim().to_string();
                match kind {
                    Block::Header => *role_header = Some(body),
                    Block::Section(title) => sections.push(Section { title, body }),
                    Block::Example(input_summary) => few_shots.push(FewShot {
                        input_summary,
                        exemplar_output: body,
                    }),
                }
            }
        };

        for line in text.lines() {
            let next = if let Some(s) = line.strip_prefix(EXAMPLE_PREFIX) {
                Some(Block::Example(s.trim().to_string()))
            } else if let Some(s) = line.strip_prefix("## ") {
                if !few_shots.is_empty() || matches!(current, Some((Block::Example(_), _))) {
                    return Err(TemplateError::Malformed(format!("section `{}` after the examples", s.trim())));
                }
                Some(Block::Section(s.trim().to_string()))
            } else if let Some(s) = line.strip_prefix("# ") {
                if role_header.is_some() || current.is_some() {
                    return Err(TemplateError::Malformed("role header must come first and only once".into()));
                }
                current = Some((Block::Header, vec![s.trim()]));
                continue;
            } else {
                None
            };
            match next {
                Some(block) => {
                    flush(current.take(), &mut role_header, &mut sections, &mut few_shots);
                    current = Some((block, Vec::new()));
                }
                None => match current.as_mut() {
                    Some((_, lines)) => lines.push(line),
                    None if line.trim().is_empty() => {}
                    None => return Err(TemplateError::Malformed("text before the role header".into())),
                },
            }
        }
        flush(current.take(), &mut role_header, &mut sections, &mut few_shots);
        let role_header = role_header.ok_or_else(|| TemplateError::Malformed("missing `# ` role header".into()))?;
        Ok(PromptTemplate {
            role_header,
            sections,
            few_shots,
        })
    }

    /// Placeholder names in header and sections, in first-seen order.
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let texts = std::iter::once(self.role_header.as_str()).chain(self.sections.iter().map(|s| s.body.as_str()));
        for t in texts {
            for c in placeholder_re().captures_iter(t) {
                if seen.insert(c[1].to_string()) {
                    out.push(c[1].to_string());
                }
            }
        }
        out
    }
}

fn fill(text: &str, bindings: &BTreeMap<String, String>) -> String {
    placeholder_re()
        .replace_all(text, |c: &regex::Captures| bindings[&c[1]].clone())
        .into_owned()
}

/// Renders sections in order, then the few-shots; bound values are not re-expanded.
pub fn render_prompt(template: &PromptTemplate, bindings: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    if let Some(missing) = template.placeholders().into_iter().find(|p| !bindings.contains_key(p)) {
        return Err(TemplateError::UnboundPlaceholder(missing));
    }
    let mut out = String::new();
    let _ = writeln!(out, "# {}", fill(&template.role_header, bindings));
    for s in &template.sections {
        let _ = write!(out, "\n## {}\n{}\n", s.title, fill(&s.body, bindings));
    }
    if !template.few_shots.is_empty() {
        out.push_str("\n## Examples\n");
        for shot in &template.few_shots {
            let _ = write!(out, "\n{} {}\n{}\n", EXAMPLE_PREFIX, shot.input_summary, shot.exemplar_output);
        }
    }
    Ok(out)
}

pub const DESCRIPTOR_TEMPLATE: &str = include_str!("../../templates/descriptor.md");
pub const PLANNER_TEMPLATE: &str = include_str!("../../templates/planner.md");
pub const GENERATOR_TEMPLATE: &str = include_str!("../../templates/generator.md");

pub fn descriptor_template() -> PromptTemplate {
    PromptTemplate::from_markdown(DESCRIPTOR_TEMPLATE).expect("bundled descriptor template")
}

pub fn planner_template() -> PromptTemplate {
    PromptTemplate::from_markdown(PLANNER_TEMPLATE).expect("bundled planner template")
}

pub fn generator_template() -> PromptTemplate {
    PromptTemplate::from_markdown(GENERATOR_TEMPLATE).expect("bundled generator template")
}
