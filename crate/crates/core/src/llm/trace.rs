use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde_json::json;

use super::{Backend, CompletionRequest, CompletionResult, LlmError};

/// Wraps a backend and appends each request and its outcome to a JSONL file.
///
/// Image bytes are not written; only their dimensions are.
pub struct TracingBackend<B> {
    inner: B,
    sink: Mutex<BufWriter<File>>,
}

impl<B: Backend> TracingBackend<B> {
    pub fn create(inner: B, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(TracingBackend {
            inner,
            sink: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for TracingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        let result = self.inner.complete(request);
        let outcome = match &result {
            Ok(r) => json!({"ok": r}),
            Err(e) => json!({"error": e.to_string()}),
        };
        let line = json!({"request": request, "response": outcome});
        let mut sink = self.sink.lock().expect("trace sink poisoned");
        // tracing must not turn a successful call into a failure
        let _ = writeln!(sink, "{line}").and_then(|_| sink.flush());
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptedBackend, ScriptedFixture};

    #[test]
    fn writes_one_line_per_call() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let backend = TracingBackend::create(ScriptedBackend::new(ScriptedFixture::default()), &path).unwrap();
        let req = CompletionRequest::new("planner", "m", "s").with_text("x");
        assert!(backend.complete(&req).is_err());
        assert!(backend.complete(&req).is_err());
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["request"]["role"], "planner");
        assert!(v["response"]["error"].as_str().unwrap().contains("planner:<untagged>"));
    }
}
