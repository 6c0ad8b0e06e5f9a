//! Term-frequency / inverse-document-frequency similarity scorer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EvalError, SceneRecord};
use crate::scalar::Real;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar<T> {
    /// Record this exemplar came from; scoring a record with the same id skips it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub label: T,
}

impl<T> Exemplar<T> {
    pub fn new(text: impl Into<String>, label: T) -> Self {
        Exemplar { id: None, text: text.into(), label }
    }
}

impl<T: Real> Exemplar<T> {
    pub fn from_record(r: &SceneRecord) -> Option<Self> {
        Some(Exemplar {
            id: Some(r.id.clone()),
            text: r.text(),
            label: T::lit(r.human_label?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldWeights<T> {
    pub action: T,
    pub justification: T,
}

impl<T: Real> Default for FieldWeights<T> {
    fn default() -> Self {
        FieldWeights { action: T::lit(0.5), justification: T::lit(0.5) }
    }
}

impl<T: Real> FieldWeights<T> {
    pub fn check(&self) -> Result<(), EvalError> {
        let ok = self.action >= T::zero()
            && self.justification >= T::zero()
            && ((self.action + self.justification) - T::one()).abs() <= T::lit(1e-6);
        if ok {
            Ok(())
        } else {
            Err(EvalError::Invalid(format!(
                "field weights ({}, {}) must be non-negative and sum to 1",
                self.action, self.justification
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrScore<T> {
    pub score: T,
    /// Set when the record had no known terms and the mean label was used.
    pub fallback: bool,
}

type SparseVec<T> = BTreeMap<usize, T>;

/// Exemplar corpus with precomputed unit tf-idf vectors.
#[derive(Debug, Clone)]
pub struct IrIndex<T> {
    exemplars: Vec<Exemplar<T>>,
    vocab: BTreeMap<String, usize>,
    idf: Vec<T>,
    vectors: Vec<SparseVec<T>>,
    temperature: T,
}

impl<T: Real> IrIndex<T> {
    pub const DEFAULT_TEMPERATURE: f64 = 0.1;

    pub fn new(exemplars: Vec<Exemplar<T>>) -> Result<Self, EvalError> {
        Self::with_temperature(exemplars, T::lit(Self::DEFAULT_TEMPERATURE))
    }

    /// Smoothed idf: ln((1 + N) / (1 + df)) + 1.
    pub fn with_temperature(exemplars: Vec<Exemplar<T>>, temperature: T) -> Result<Self, EvalError> {
        if exemplars.is_empty() {
            return Err(EvalError::Invalid("exemplar corpus is empty".into()));
        }
        if temperature.is_nan() || temperature <= T::zero() {
            return Err(EvalError::Invalid("softmax temperature must be positive".into()));
        }
        if let Some(e) = exemplars.iter().find(|e| !(e.label >= T::zero() && e.label <= T::one())) {
            return Err(EvalError::Invalid(format!("exemplar label {} outside [0, 1]", e.label)));
        }
        let mut vocab = BTreeMap::new();
        let mut df: Vec<usize> = Vec::new();
        let docs: Vec<Vec<String>> = exemplars.iter().map(|e| tokenize(&e.text)).collect();
        for doc in &docs {
            let mut seen: Vec<usize> = doc
                .iter()
                .map(|t| {
                    let next = vocab.len();
                    let id = *vocab.entry(t.clone()).or_insert(next);
                    if id == df.len() {
                        df.push(0);
                    }
                    id
                })
                .collect();
            seen.sort_unstable();
            seen.dedup();
            for id in seen {
                df[id] += 1;
            }
        }
        let n = T::lit(docs.len() as f64);
        let idf = df
            .iter()
            .map(|&d| ((T::one() + n) / (T::one() + T::lit(d as f64))).ln() + T::one())
            .collect();
        let mut index = IrIndex { exemplars, vocab, idf, vectors: Vec::new(), temperature };
        index.vectors = docs.iter().map(|d| index.embed_tokens(d)).collect();
        Ok(index)
    }

    pub fn exemplars(&self) -> &[Exemplar<T>] {
        &self.exemplars
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocab.len()
    }

    /// Unit-norm tf-idf vector; empty when no token is in the vocabulary.
    pub fn embed(&self, text: &str) -> BTreeMap<usize, T> {
        self.embed_tokens(&tokenize(text))
    }

    fn embed_tokens(&self, tokens: &[String]) -> SparseVec<T> {
        let mut v: SparseVec<T> = BTreeMap::new();
        for t in tokens {
            if let Some(&id) = self.vocab.get(t) {
                let x = v.entry(id).or_insert_with(T::zero);
                *x = *x + T::one();
            }
        }
        for (id, x) in v.iter_mut() {
            *x = *x * self.idf[*id];
        }
        let norm = v.values().fold(T::zero(), |a, &x| a + x * x).sqrt();
        if norm > T::zero() {
            v.values_mut().for_each(|x| *x = *x / norm);
        }
        v
    }

    fn mean_label(&self, skip: Option<&str>) -> T {
        let (sum, n) = self
            .exemplars
            .iter()
            .filter(|e| skip.is_none() || e.id.as_deref() != skip)
            .fold((T::zero(), 0usize), |(s, n), e| (s + e.label, n + 1));
        if n == 0 {
            let all = self.exemplars.iter().fold(T::zero(), |s, e| s + e.label);
            all / T::lit(self.exemplars.len() as f64)
        } else {
            sum / T::lit(n as f64)
        }
    }

    pub fn score(&self, record: &SceneRecord, fields: &FieldWeights<T>) -> Result<IrScore<T>, EvalError> {
        fields.check()?;
        let a = self.embed(&record.action_text);
        let j = self.embed(&record.justification_text);
        let skip = Some(record.id.as_str());
        if a.is_empty() && j.is_empty() {
            return Ok(IrScore { score: self.mean_label(skip), fallback: true });
        }
        let sims: Vec<(T, T)> = self
            .exemplars
            .iter()
            .zip(&self.vectors)
            .filter(|(e, _)| e.id.as_deref() != skip)
            .map(|(e, v)| (fields.action * dot(&a, v) + fields.justification * dot(&j, v), e.label))
            .collect();
        if sims.is_empty() {
            return Ok(IrScore { score: self.mean_label(None), fallback: true });
        }
        let top = sims.iter().map(|s| s.0).fold(T::neg_infinity(), T::max);
        let (num, den) = sims.iter().fold((T::zero(), T::zero()), |(num, den), &(s, label)| {
            let w = ((s - top) / self.temperature).exp();
            (num + w * label, den + w)
        });
        let score = (num / den).max(T::zero()).min(T::one());
        Ok(IrScore { score, fallback: false })
    }
}

fn dot<T: Real>(a: &SparseVec<T>, b: &SparseVec<T>) -> T {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .filter_map(|(k, x)| large.get(k).map(|y| *x * *y))
        .fold(T::zero(), |s, v| s + v)
}

/// Softmax-weighted label average over exemplar similarities.
pub fn ir_cosine_criticality<T: Real>(
    record: &SceneRecord,
    exemplars: &[Exemplar<T>],
    field_weights: &FieldWeights<T>,
) -> Result<IrScore<T>, EvalError> {
    IrIndex::new(exemplars.to_vec())?.score(record, field_weights)
}
