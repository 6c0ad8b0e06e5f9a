//! Criticality labeling ensemble, weight search, losses and run-metric reports.

mod aggregate;
mod corpus;
mod ensemble;
mod regex_rules;
mod regressor;
mod report;
mod tfidf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{aggregate_metrics, AgentMeans, MetricsReport};
pub use corpus::{load_corpus, parse_corpus, synthetic_corpus, write_corpus, SyntheticCorpus};
pub use ensemble::{
    binary_metrics, ensemble_score, grid_points, grid_search_on_scores, l1_loss, step_divisions, BinaryMetrics,
    ComponentScores, EnsembleWeights, GridSearch, THRESHOLD,
};
pub use regex_rules::{regex_criticality, RegexRules, Rule, DEFAULT_RULES_JSON};
pub use regressor::{hazard_count, regressor_criticality, token_count, BaseScorers, StackingRegressor, FEATURE_NAMES};
pub use report::{
    descriptor_agreement, evaluate, grid_search_weights, ComponentLosses, DescriptorEval, EvalConfig, EvalReport, RecordScore,
    Split,
};
pub use tfidf::{ir_cosine_criticality, tokenize, Exemplar, FieldWeights, IrIndex, IrScore};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no annotated records")]
    NoAnnotated,
    #[error("need at least {need} annotated records, got {got}")]
    TooFewAnnotated { need: usize, got: usize },
    #[error("regressor used before fit")]
    Untrained,
    #[error("weights off the simplex: {0}")]
    InvalidWeights(String),
    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("no records carry pipeline metrics")]
    NoMetrics,
}

/// An (action, justification) pair with an optional human criticality label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub id: String,
    pub action_text: String,
    pub justification_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_label: Option<f64>,
}

impl SceneRecord {
    pub fn new(id: impl Into<String>, action: impl Into<String>, justification: impl Into<String>) -> Self {
        SceneRecord {
            id: id.into(),
            action_text: action.into(),
            justification_text: justification.into(),
            human_label: None,
        }
    }

    pub fn labeled(mut self, label: f64) -> Self {
        self.human_label = Some(label);
        self
    }

    pub fn is_annotated(&self) -> bool {
        self.human_label.is_some()
    }

    pub fn text(&self) -> String {
        format!("{} {}", self.action_text, self.justification_text)
    }

    pub fn check(&self) -> Result<(), EvalError> {
        if self.id.trim().is_empty() {
            return Err(EvalError::Invalid("record id is empty".into()));
        }
        if self.action_text.trim().is_empty() || self.justification_text.trim().is_empty() {
            return Err(EvalError::Invalid(format!("record {}: empty text", self.id)));
        }
        if let Some(l) = self.human_label {
            if !(0.0..=1.0).contains(&l) {
                return Err(EvalError::Invalid(format!("record {}: label {l} outside [0, 1]", self.id)));
            }
        }
        Ok(())
    }
}
