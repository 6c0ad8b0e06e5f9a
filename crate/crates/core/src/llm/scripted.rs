use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, CompletionRequest, CompletionResult, LlmError};

/// Line prefix carrying the scene tag inside user content.
pub const SCENE_TAG_MARKER: &str = "[scene-tag: ";
/// Present in a request that re-asks after an unparseable reply.
pub const REPROMPT_MARKER: &str = "[round: reprompt]";
/// Present in a request that asks the generator to repair an invalid subtree.
pub const REPAIR_MARKER: &str = "[round: repair]";

pub const BUNDLED_FIXTURES: &str = include_str!("../../assets/fixtures/bundled.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub reply: String,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    /// Reported as the call latency so that timing metrics are reproducible.
    #[serde(default)]
    pub latency_ms: u64,
}

/// Canned replies keyed by `role:scene-tag[:reprompt|:repair]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedFixture {
    pub entries: BTreeMap<String, FixtureEntry>,
}

impl ScriptedFixture {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn insert(&mut self, key: impl Into<String>, entry: FixtureEntry) {
        self.entries.insert(key.into(), entry);
    }

    /// Fixtures shipped with the crate for the bundled scenarios.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_FIXTURES).expect("bundled fixtures parse")
    }

    /// Entries of `other` override entries with the same key.
    pub fn merge(mut self, other: ScriptedFixture) -> Self {
        self.entries.extend(other.entries);
        self
    }
}

/// Derives the fixture key for a request.
///
/// The key depends only on the agent role, the scene tag line embedded by
/// the harness, and the retry round, so prompt wording can change without
/// invalidating fixtures.
pub fn fixture_key(request: &CompletionRequest) -> String {
    let text = request.user_text();
    let tag = text
        .lines()
        .find_map(|l| l.trim().strip_prefix(SCENE_TAG_MARKER).and_then(|r| r.strip_suffix(']')))
        .map(str::trim)
        .unwrap_or("<untagged>");
    let mut key = format!("{}:{}", request.role, tag);
    if text.contains(REPAIR_MARKER) {
        key.push_str(":repair");
    } else if text.contains(REPROMPT_MARKER) {
        key.push_str(":reprompt");
    }
    key
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: String,
    pub key: String,
    pub hit: bool,
}

/// Deterministic offline backend answering from a [`ScriptedFixture`].
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    fixture: ScriptedFixture,
    calls: Mutex<Vec<CallRecord>>,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptedFixture) -> Self {
        ScriptedBackend {
            fixture,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn fixture(&self) -> &ScriptedFixture {
        &self.fixture
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().expect("call log poisoned").clone()
    }

    pub fn calls_for(&self, role: &str) -> usize {
        self.calls.lock().expect("call log poisoned").iter().filter(|c| c.role == role).count()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        request.check()?;
        let key = fixture_key(request);
        let entry = self.fixture.entries.get(&key);
        self.calls.lock().expect("call log poisoned").push(CallRecord {
            role: request.role.clone(),
            key: key.clone(),
            hit: entry.is_some(),
        });
        let entry = entry.ok_or(LlmError::FixtureMiss { key })?;
        Ok(CompletionResult {
            text: entry.reply.clone(),
            prompt_tokens: entry.prompt_tokens,
            completion_tokens: entry.completion_tokens,
            latency: Duration::from_millis(entry.latency_ms),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> ScriptedFixture {
        ScriptedFixture::from_json(
            r#"{
                "descriptor:blocked_lane_firetruck": {"reply": "{\"isCritical\": true}", "prompt_tokens": 37850, "completion_tokens": 638, "latency_ms": 10240},
                "descriptor:blocked_lane_firetruck:reprompt": {"reply": "{}"}
            }"#,
        )
        .unwrap()
    }

    fn request(extra: &str) -> CompletionRequest {
        CompletionRequest::new("descriptor", "m", "sys")
            .with_text(format!("{SCENE_TAG_MARKER}blocked_lane_firetruck]\nwhatever wording{extra}"))
    }

    #[test]
    fn keyed_by_role_and_tag() {
        let backend = ScriptedBackend::new(fixture());
        let r = backend.complete(&request("")).unwrap();
        assert_eq!(r.total_tokens(), 38488);
        assert_eq!(r.latency, Duration::from_millis(10240));
        assert_eq!(backend.calls()[0].key, "descriptor:blocked_lane_firetruck");
    }

    #[test]
    fn wording_does_not_change_key() {
        let a = request(" one");
        let mut b = request(" two");
        b.system_prompt = "entirely different".into();
        assert_eq!(fixture_key(&a), fixture_key(&b));
    }

    #[test]
    fn rounds_get_their_own_keys() {
        assert_eq!(fixture_key(&request(&format!("\n{REPROMPT_MARKER}"))), "descriptor:blocked_lane_firetruck:reprompt");
        assert_eq!(fixture_key(&request(&format!("\n{REPAIR_MARKER}"))), "descriptor:blocked_lane_firetruck:repair");
    }

    #[test]
    fn unknown_key_is_a_fixture_miss() {
        let backend = ScriptedBackend::new(fixture());
        let req = CompletionRequest::new("planner", "m", "sys").with_text(format!("{SCENE_TAG_MARKER}nope]"));
        assert_eq!(
            backend.complete(&req),
            Err(LlmError::FixtureMiss { key: "planner:nope".into() })
        );
        assert!(!backend.calls()[0].hit);
    }

    #[test]
    fn identical_requests_identical_results() {
        let backend = ScriptedBackend::new(fixture());
        assert_eq!(backend.complete(&request("")), backend.complete(&request("")));
    }
}
