//! Pattern-weighted criticality heuristic.

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{EvalError, SceneRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub pattern: String,
    pub score: f64,
}

/// Ordered, compiled rule table.
#[derive(Debug, Clone)]
pub struct RegexRules {
    rules: Vec<(Rule, Regex)>,
}

pub const DEFAULT_RULES_JSON: &str = include_str!("../../assets/rules/default_rules.json");

impl RegexRules {
    pub fn new(rules: Vec<Rule>) -> Result<Self, EvalError> {
        if rules.is_empty() {
            return Err(EvalError::Invalid("rule table is empty".into()));
        }
        let compiled = rules
            .into_iter()
            .map(|r| {
                let re = Regex::new(&r.pattern).map_err(|e| EvalError::Invalid(format!("bad pattern `{}`: {e}", r.pattern)))?;
                Ok((r, re))
            })
            .collect::<Result<_, EvalError>>()?;
        Ok(RegexRules { rules: compiled })
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let rules: Vec<Rule> = serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
        Self::new(rules)
    }

    pub fn default_rules() -> Self {
        Self::from_json(DEFAULT_RULES_JSON).expect("bundled rules are valid")
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().map(|(r, _)| r)
    }

    /// Sum of the scores of patterns matching either text, clamped to [0, 1].
    pub fn score_texts(&self, texts: &[&str]) -> f64 {
        let sum: f64 = self
            .rules
            .iter()
            .filter(|(_, re)| texts.iter().any(|t| re.is_match(t)))
            .map(|(r, _)| r.score)
            .sum();
        sum.clamp(0.0, 1.0)
    }
}

pub fn regex_criticality(record: &SceneRecord, rules: &RegexRules) -> f64 {
    rules.score_texts(&[&record.action_text, &record.justification_text])
}
