use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A value stored on the blackboard.
///
/// Poses are `[x, y, heading]` in world units; paths are ordered pose lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Value {
    Str(String),
    Num(f64),
    Bool(bool),
    Pose([f64; 3]),
    Path(Vec<[f64; 3]>),
}

/// Key-value store shared by the leaves of one tree execution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Blackboard {
    slots: BTreeMap<String, Value>,
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    /// `None` means the key is absent, which is distinct from an empty string or path.
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.slots.get(key)
    }

    pub fn set(&mut self, key: impl Into<String>, value: Value) -> Option<Value> {
        self.slots.insert(key.into(), value)
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.slots.remove(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.slots.contains_key(key)
    }

    pub fn num(&self, key: &str) -> Option<f64> {
        match self.slots.get(key)? {
            Value::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn pose(&self, key: &str) -> Option<[f64; 3]> {
        match self.slots.get(key)? {
            Value::Pose(p) => Some(*p),
            _ => None,
        }
    }

    pub fn path(&self, key: &str) -> Option<&[[f64; 3]]> {
        match self.slots.get(key)? {
            Value::Path(p) => Some(p),
            _ => None,
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}
