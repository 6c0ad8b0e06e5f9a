use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};

use super::{Backend, CompletionRequest, CompletionResult, ContentPart, LlmError, ResponseFormat};

pub const API_KEY_ENV: &str = "PAVEMENT_API_KEY";
pub const API_BASE_ENV: &str = "PAVEMENT_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub api_base: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn from_env() -> Self {
        RemoteConfig {
            api_base: std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_API_BASE.to_string()),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(60),
        }
    }
}

/// Client for the chat-completions JSON protocol.
pub struct ChatCompletionsBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl ChatCompletionsBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        ChatCompletionsBackend { config, agent }
    }

    pub fn from_env() -> Self {
        Self::new(RemoteConfig::from_env())
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.api_base.trim_end_matches('/'))
    }

    /// Request body in wire format.
    pub fn request_body(request: &CompletionRequest) -> Value {
        let parts: Vec<Value> = request
            .user_content
            .iter()
            .map(|p| match p {
                ContentPart::Text { text } => json!({"type": "text", "text": text}),
                ContentPart::ImagePng { data, .. } => {
                    let b64 = base64::engine::general_purpose::STANDARD.encode(data);
                    json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}})
                }
                ContentPart::ImageUrl { url } => json!({"type": "image_url", "image_url": {"url": url}}),
            })
            .collect();
        let mut body = json!({
            "model": request.model_name,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": parts},
            ],
        });
        if request.response_format == ResponseFormat::JsonObject {
            body["response_format"] = json!({"type": "json_object"});
        }
        body
    }

    /// Extracts reply text and token usage from a response body.
    pub fn parse_response(body: &Value) -> Result<(String, u64, u64), LlmError> {
        let text = body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Protocol("missing choices[0].message.content".into()))?;
        let usage = |name: &str| -> Result<u64, LlmError> {
            body.pointer(&format!("/usage/{name}"))
                .and_then(Value::as_u64)
                .ok_or_else(|| LlmError::Protocol(format!("missing usage.{name}")))
        };
        Ok((text.to_string(), usage("prompt_tokens")?, usage("completion_tokens")?))
    }
}

fn classify(status: u16, body: String) -> LlmError {
    match status {
        401 | 403 => LlmError::Auth(format!("HTTP {status}: {body}")),
        429 => LlmError::RateLimited(format!("HTTP {status}: {body}")),
        500..=599 => LlmError::Transport(format!("HTTP {status}: {body}")),
        _ => LlmError::Protocol(format!("HTTP {status}: {body}")),
    }
}

impl Backend for ChatCompletionsBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        request.check()?;
        let key = self
            .config
            .api_key
            .as_deref()
            .ok_or_else(|| LlmError::Auth(format!("{API_KEY_ENV} is not set")))?;
        let body = Self::request_body(request);
        let started = Instant::now();
        let response = self
            .agent
            .post(&self.endpoint())
            .set("Authorization", &format!("Bearer {key}"))
            .send_json(body);
        let response = match response {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                return Err(classify(code, r.into_string().unwrap_or_default()));
            }
            Err(ureq::Error::Transport(t)) => return Err(LlmError::Transport(t.to_string())),
        };
        let value: Value = response
            .into_json()
            .map_err(|e| LlmError::Protocol(format!("response is not JSON: {e}")))?;
        let latency = started.elapsed();
        let (text, prompt_tokens, completion_tokens) = Self::parse_response(&value)?;
        Ok(CompletionResult {
            text,
            prompt_tokens,
            completion_tokens,
            latency,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    use super::*;

    fn request() -> CompletionRequest {
        CompletionRequest::new("descriptor", "gpt-4o-mini", "system text")
            .with_text("scene")
            .with_part(ContentPart::ImagePng { data: vec![1, 2, 3], width: 1, height: 1 })
    }

    #[test]
    fn body_has_messages_and_json_mode() {
        let body = ChatCompletionsBackend::request_body(&request());
        assert_eq!(body["model"], "gpt-4o-mini");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"][0]["text"], "scene");
        assert_eq!(body["messages"][1]["content"][1]["image_url"]["url"], "data:image/png;base64,AQID");
        assert_eq!(body["response_format"]["type"], "json_object");
    }

    #[test]
    fn parses_usage() {
        let body = json!({"choices": [{"message": {"content": "{}"}}], "usage": {"prompt_tokens": 5, "completion_tokens": 7}});
        assert_eq!(ChatCompletionsBackend::parse_response(&body).unwrap(), ("{}".into(), 5, 7));
        assert!(matches!(
            ChatCompletionsBackend::parse_response(&json!({"choices": []})),
            Err(LlmError::Protocol(_))
        ));
    }

    #[test]
    fn missing_key_is_auth_error() {
        let backend = ChatCompletionsBackend::new(RemoteConfig {
            api_base: "http://127.0.0.1:9".into(),
            api_key: None,
            timeout: Duration::from_secs(1),
        });
        assert!(matches!(backend.complete(&request()), Err(LlmError::Auth(_))));
    }

    /// Serves one canned HTTP response and returns the raw request it received.
    fn serve_once(status: &str, body: &str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let response = format!(
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        let handle = thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut content_length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; content_length];
            reader.read_exact(&mut body).unwrap();
            stream.write_all(response.as_bytes()).unwrap();
            head + &String::from_utf8(body).unwrap()
        });
        (format!("http://{addr}"), handle)
    }

    fn backend(base: String) -> ChatCompletionsBackend {
        ChatCompletionsBackend::new(RemoteConfig {
            api_base: base,
            api_key: Some("sk-test".into()),
            timeout: Duration::from_secs(5),
        })
    }

    #[test]
    fn round_trip_against_local_server() {
        let (base, handle) = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"{\"ok\":true}"}}],"usage":{"prompt_tokens":11,"completion_tokens":3}}"#,
        );
        let result = backend(base).complete(&request()).unwrap();
        assert_eq!(result.text, "{\"ok\":true}");
        assert_eq!((result.prompt_tokens, result.completion_tokens), (11, 3));
        let raw = handle.join().unwrap();
        assert!(raw.starts_with("POST /chat/completions"));
        assert!(raw.contains("Bearer sk-test"));
        assert!(raw.contains("\"temperature\":0.0"));
    }

    #[test]
    fn status_codes_map_to_errors() {
        for (status, check) in [
            ("401 Unauthorized", (|e: &LlmError| matches!(e, LlmError::Auth(_))) as fn(&LlmError) -> bool),
            ("429 Too Many Requests", |e| matches!(e, LlmError::RateLimited(_))),
            ("503 Service Unavailable", |e| matches!(e, LlmError::Transport(_))),
        ] {
            let (base, handle) = serve_once(status, "{}");
            let err = backend(base).complete(&request()).unwrap_err();
            assert!(check(&err), "{status}: {err}");
            handle.join().unwrap();
        }
    }
}
