//! Descriptor, Planner and Generator agents over a completion backend.

mod structured;
mod template;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

pub use structured::{parse_structured_output, strip_fences, JsonKind, StructuredOutputError};
pub use template::{
    descriptor_template, generator_template, planner_template, render_prompt, FewShot, PromptTemplate, Section, TemplateError,
    DESCRIPTOR_TEMPLATE, GENERATOR_TEMPLATE, PLANNER_TEMPLATE,
};

pub use crate::sim::{Raster, SceneObstacle, SceneSnapshot, StructuredScene};

use crate::bt::{parse_bt_xml, validate_against_palette, BehaviorTree, NodePalette};
use crate::llm::{Backend, CompletionRequest, CompletionResult, ContentPart, LlmError, REPAIR_MARKER, REPROMPT_MARKER, SCENE_TAG_MARKER};
use crate::sim::LEAVES;

pub const DESCRIPTOR: &str = "descriptor";
pub const PLANNER: &str = "planner";
pub const GENERATOR: &str = "generator";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(rename = "isCritical")]
    pub is_critical: bool,
    pub confidence: f64,
    #[serde(rename = "issueExplanation")]
    pub issue_explanation: String,
    #[serde(rename = "sceneDescription")]
    pub scene_description: String,
    #[serde(skip)]
    pub reasoning_trace: String,
}

impl Observation {
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if self.is_critical && self.issue_explanation.trim().is_empty() {
            return Err("critical observation without an issue explanation".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGoal {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub goals: Vec<SubGoal>,
}

impl Plan {
    pub fn check(&self) -> Result<(), String> {
        if self.goals.is_empty() {
            return Err("plan has no sub-goals".into());
        }
        for (i, g) in self.goals.iter().enumerate() {
            if g.index != i + 1 {
                return Err(format!("sub-goal at position {} has index {}", i + 1, g.index));
            }
            if g.text.trim().is_empty() {
                return Err(format!("sub-goal {} has empty text", g.index));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }
}

/// Backend usage accumulated by one agent operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub calls: u32,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(with = "crate::llm::duration_secs")]
    pub latency: Duration,
}

impl Usage {
    pub fn record(&mut self, r: &CompletionResult) {
        self.calls += 1;
        self.prompt_tokens += r.prompt_tokens;
        self.completion_tokens += r.completion_tokens;
        self.latency += r.latency;
    }

    pub fn tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn merge(&mut self, other: &Usage) {
        self.calls += other.calls;
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.latency += other.latency;
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("structured output error: {0}")]
    StructuredOutput(#[from] StructuredOutputError),
    #[error("observation is not critical; nothing to plan")]
    NotCritical,
    #[error("planner replied with an empty plan")]
    EmptyPlanReply,
    #[error("generated subtree still invalid after repair: {0}")]
    GenerationInvalid(String),
    #[error("invalid agent input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

/// Per-run settings shared by the agents.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentContext {
    pub model_name: String,
    /// Overrides the tag derived from the snapshot narrative.
    pub scene_tag: Option<String>,
}

impl AgentContext {
    pub fn new(model_name: impl Into<String>) -> Self {
        AgentContext {
            model_name: model_name.into(),
            scene_tag: None,
        }
    }

    pub fn with_scene_tag(mut self, tag: impl Into<String>) -> Self {
        self.scene_tag = Some(tag.into());
        self
    }

    fn tag_line(&self, fallback: Option<&str>, suffix: &str) -> String {
        let tag = self.scene_tag.as_deref().or(fallback).unwrap_or("untagged");
        format!("{SCENE_TAG_MARKER}{tag}{suffix}]")
    }
}

fn reprompt_text(err: &StructuredOutputError) -> String {
    format!("{REPROMPT_MARKER}\nYour previous reply was rejected ({err}). Reply again with only the JSON object described in the output format.")
}

/// One call, then one reprompt if the reply does not parse.
fn ask<T>(
    backend: &dyn Backend,
    request: CompletionRequest,
    usage: &mut Usage,
    parse: impl Fn(&str) -> Result<T, StructuredOutputError>,
) -> Result<T, AgentError> {
    let first = backend.complete(&request)?;
    usage.record(&first);
    match parse(&first.text) {
        Ok(v) => Ok(v),
        Err(err) => {
            let retry = request.with_text(reprompt_text(&err));
            let second = backend.complete(&retry)?;
            usage.record(&second);
            Ok(parse(&second.text)?)
        }
    }
}

fn observation_from_reply(text: &str) -> Result<Observation, StructuredOutputError> {
    let map = parse_structured_output(
        text,
        &[
            ("isCritical", JsonKind::Bool),
            ("issueExplanation", JsonKind::String),
            ("sceneDescription", JsonKind::String),
            ("confidence", JsonKind::Number),
        ],
    )?;
    let percent = map["confidence"].as_f64().unwrap_or(f64::NAN);
    if !(0.0..=100.0).contains(&percent) {
        return Err(StructuredOutputError::WrongKind("confidence".into()));
    }
    let reasoning = ["reasoning", "reasoningTrace"]
        .iter()
        .find_map(|k| map.get(*k))
        .map(|v| match v {
            Json::String(s) => s.clone(),
            other => other.to_string(),
        })
        .unwrap_or_default();
    let obs = Observation {
        is_critical: map["isCritical"].as_bool().unwrap_or(false),
        confidence: percent / 100.0,
        issue_explanation: map["issueExplanation"].as_str().unwrap_or_default().to_string(),
        scene_description: map["sceneDescription"].as_str().unwrap_or_default().to_string(),
        reasoning_trace: reasoning,
    };
    obs.check().map_err(StructuredOutputError::Invalid)?;
    Ok(obs)
}

/// Assesses a snapshot's criticality.
pub fn describe(snapshot: &SceneSnapshot, backend: &dyn Backend, ctx: &AgentContext) -> Result<(Observation, Usage), AgentError> {
    snapshot.check().map_err(AgentError::InvalidInput)?;
    let system = render_prompt(&descriptor_template(), &BTreeMap::new())?;
    let mut text = ctx.tag_line(snapshot.scene_tag(), "");
    match &snapshot.structured_scene {
        Some(scene) => {
            text.push_str("\nStructured scene (meters, radians):\n");
            text.push_str(&serde_json::to_string_pretty(scene).expect("scene serializes"));
        }
        None => text.push_str("\nThe scene is provided as a top-down image."),
    }
    let mut request = CompletionRequest::new(DESCRIPTOR, ctx.model_name.clone(), system).with_text(text);
    if let Some(img) = &snapshot.image {
        request = request.with_part(ContentPart::ImagePng {
            data: img.to_png(),
            width: img.width,
            height: img.height,
        });
    }
    let mut usage = Usage::default();
    let obs = ask(backend, request, &mut usage, observation_from_reply)?;
    Ok((obs, usage))
}

enum PlanReply {
    Empty,
    Goals(Plan),
}

fn plan_from_reply(text: &str) -> Result<PlanReply, StructuredOutputError> {
    let map = parse_structured_output(text, &[("goals", JsonKind::Array)])?;
    let items = map["goals"].as_array().expect("checked kind");
    if items.is_empty() {
        return Ok(PlanReply::Empty);
    }
    let mut goals = Vec::with_capacity(items.len());
    for item in items {
        let idx = item.get("index").and_then(Json::as_u64).ok_or_else(|| StructuredOutputError::WrongKind("goals[].index".into()))?;
        let text = item.get("text").and_then(Json::as_str).ok_or_else(|| StructuredOutputError::WrongKind("goals[].text".into()))?;
        goals.push(SubGoal {
            index: idx as usize,
            text: text.trim().to_string(),
        });
    }
    let plan = Plan { goals };
    plan.check().map_err(StructuredOutputError::Invalid)?;
    Ok(PlanReply::Goals(plan))
}

/// Plain-language description of the executable leaves, for the Planner.
pub fn capability_list() -> String {
    LEAVES.iter().map(|l| format!("- {}: {}", l.id, l.summary)).collect::<Vec<_>>().join("\n")
}

/// Turns a critical observation into an ordered list of sub-goals.
pub fn plan(observation: &Observation, backend: &dyn Backend, ctx: &AgentContext) -> Result<(Plan, Usage), AgentError> {
    if !observation.is_critical {
        return Err(AgentError::NotCritical);
    }
    observation.check().map_err(AgentError::InvalidInput)?;
    let bindings = BTreeMap::from([("capabilities".to_string(), capability_list())]);
    let system = render_prompt(&planner_template(), &bindings)?;
    let text = format!(
        "{}\nScene assessment:\n{}",
        ctx.tag_line(None, ""),
        serde_json::to_string_pretty(observation).expect("observation serializes")
    );
    let request = CompletionRequest::new(PLANNER, ctx.model_name.clone(), system).with_text(text);
    let mut usage = Usage::default();
    match ask(backend, request, &mut usage, plan_from_reply)? {
        PlanReply::Empty => Err(AgentError::EmptyPlanReply),
        PlanReply::Goals(p) => Ok((p, usage)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub tree: BehaviorTree,
    /// Set when the first reply was invalid and the repair round fixed it.
    pub repaired: bool,
}

/// Extracts subtree XML from a `{"xml": ...}` reply or from bare XML.
fn xml_from_reply(text: &str) -> Result<String, StructuredOutputError> {
    let body = strip_fences(text);
    if body.starts_with('<') {
        return Ok(body.to_string());
    }
    let map = parse_structured_output(body, &[("xml", JsonKind::String)])?;
    Ok(map["xml"].as_str().expect("checked kind").to_string())
}

fn subtree_from_xml(xml: &str, name: &str, palette: &NodePalette) -> Result<BehaviorTree, String> {
    let doc = if xml.contains("<BehaviorTree") {
        xml.to_string()
    } else {
        format!("<BehaviorTree name=\"{name}\">{xml}</BehaviorTree>")
    };
    let tree = parse_bt_xml(&doc).map_err(|e| format!("XML error: {e}"))?;
    let report = validate_against_palette(&tree, palette);
    if report.is_valid() {
        Ok(tree)
    } else {
        Err(format!("palette violations:\n{report}"))
    }
}

fn leaf_docs(palette: &NodePalette) -> String {
    palette
        .entries()
        .map(|(id, _)| {
            let summary = LEAVES.iter().find(|l| l.id == id).map_or("no description available", |l| l.summary);
            format!("- {id}: {summary}")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Builds a palette-valid subtree for one sub-goal, with one repair round.
pub fn generate(
    goal: &SubGoal,
    palette: &NodePalette,
    scene_context: &str,
    backend: &dyn Backend,
    ctx: &AgentContext,
) -> Result<(Generated, Usage), AgentError> {
    if palette.is_empty() {
        return Err(AgentError::InvalidInput("palette is empty".into()));
    }
    let bindings = BTreeMap::from([("palette".to_string(), palette.to_json()), ("leaf_docs".to_string(), leaf_docs(palette))]);
    let system = render_prompt(&generator_template(), &bindings)?;
    let name = format!("goal_{}", goal.index);
    let text = format!(
        "{}\nSub-goal {}: {}\nScene context: {}",
        ctx.tag_line(None, &format!("#g{}", goal.index)),
        goal.index,
        goal.text,
        scene_context
    );
    let request = CompletionRequest::new(GENERATOR, ctx.model_name.clone(), system).with_text(text);
    let mut usage = Usage::default();
    let xml = ask(backend, request.clone(), &mut usage, xml_from_reply)?;
    let problem = match subtree_from_xml(&xml, &name, palette) {
        Ok(tree) => return Ok((Generated { tree, repaired: false }, usage)),
        Err(p) => p,
    };
    let repair = request.with_text(format!(
        "{REPAIR_MARKER}\nYour previous subtree was rejected.\nPrevious subtree:\n{xml}\nProblems:\n{problem}\nReturn a corrected subtree in the same JSON format."
    ));
    let reply = backend.complete(&repair)?;
    usage.record(&reply);
    let fixed = xml_from_reply(&reply.text).map_err(|e| AgentError::GenerationInvalid(e.to_string()))?;
    let tree = subtree_from_xml(&fixed, &name, palette).map_err(AgentError::GenerationInvalid)?;
    Ok((Generated { tree, repaired: true }, usage))
}
