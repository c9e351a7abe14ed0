use std::io::ErrorKind;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{EvalError, EvaluatorConfig, Model, Query};

/// Keeps the first `n` whitespace-separated tokens.
pub fn truncate_tokens(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

/// Client for a text-generation inference endpoint.
///
/// Sends `{"inputs": prompt, "parameters": {"max_new_tokens": n,
/// "temperature": t}}` with a bearer token and retries timeouts, transport
/// errors, 408, 429 and 5xx with exponential backoff.
pub struct RemoteModel {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
    max_output_tokens: usize,
    temperature: f64,
    max_retries: u32,
    backoff: Duration,
}

impl RemoteModel {
    pub fn new(endpoint: String, token: Option<String>, config: &EvaluatorConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteModel {
            agent,
            endpoint,
            token,
            max_output_tokens: config.max_output_tokens,
            temperature: config.temperature,
            max_retries: config.max_retries,
            backoff: config.backoff,
        }
    }

    fn request_body(&self, prompt: &str) -> Value {
        json!({
            "inputs": prompt,
            "parameters": {
                "max_new_tokens": self.max_output_tokens,
                "temperature": self.temperature,
            }
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, EvalError> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(map_transport)?;
        let status = response.status().as_u16();
        if status == 401 || status == 403 {
            return Err(EvalError::Auth(format!("endpoint answered HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(EvalError::Http { status });
        }
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(map_transport)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| EvalError::Transport(format!("response is not JSON: {e}")))?;
        generated_text(&value)
            .map(str::to_string)
            .ok_or_else(|| EvalError::Transport(format!("unrecognized response shape: {text}")))
    }
}

fn map_transport(err: ureq::Error) -> EvalError {
    match err {
        ureq::Error::Timeout(_) => EvalError::Timeout,
        ureq::Error::Io(e) if matches!(e.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) => {
            EvalError::Timeout
        }
        other => EvalError::Transport(other.to_string()),
    }
}

/// Accepts `[{"generated_text": ..}]`, `{"generated_text": ..}` and
/// `{"choices": [{"text": ..}]}`.
fn generated_text(value: &Value) -> Option<&str> {
    match value {
        Value::Array(items) => items.first().and_then(generated_text),
        Value::Object(obj) => obj
            .get("generated_text")
            .and_then(Value::as_str)
            .or_else(|| {
                obj.get("choices")?
                    .as_array()?
                    .first()?
                    .get("text")?
                    .as_str()
            }),
        _ => None,
    }
}

impl Model for RemoteModel {
    fn tag(&self) -> String {
        let host = self
            .endpoint
            .split("://")
            .nth(1)
            .unwrap_or(&self.endpoint)
            .split('/')
            .next()
            .unwrap_or_default();
        let host: String = host
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
            .collect();
        format!("remote-{host}")
    }

    fn complete(&self, query: &Query<'_>) -> Result<String, EvalError> {
        let body = self.request_body(query.prompt);
        let mut retries = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => {
                    // Some servers echo the prompt in front of the completion.
                    let text = text.strip_prefix(query.prompt).unwrap_or(&text);
                    return Ok(truncate_tokens(text, self.max_output_tokens));
                }
                Err(e) if e.is_retryable() && retries < self.max_retries => {
                    thread::sleep(self.backoff.saturating_mul(1 << retries.min(16)));
                    retries += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation() {
        assert_eq!(truncate_tokens(" Yes it is true", 3), "Yes it is");
        assert_eq!(truncate_tokens("No", 3), "No");
        assert_eq!(truncate_tokens("", 3), "");
    }

    #[test]
    fn response_shapes() {
        let v: Value = serde_json::from_str(r#"[{"generated_text": "Yes"}]"#).unwrap();
        assert_eq!(generated_text(&v), Some("Yes"));
        let v: Value = serde_json::from_str(r#"{"generated_text": "No"}"#).unwrap();
        assert_eq!(generated_text(&v), Some("No"));
        let v: Value = serde_json::from_str(r#"{"choices": [{"text": "valid"}]}"#).unwrap();
        assert_eq!(generated_text(&v), Some("valid"));
        let v: Value = serde_json::from_str(r#"{"other": 1}"#).unwrap();
        assert_eq!(generated_text(&v), None);
    }

    #[test]
    fn request_shape() {
        let m = RemoteModel::new("http://x".into(), None, &EvaluatorConfig::remote("http://x"));
        let body = m.request_body("hello");
        assert_eq!(
            body,
            json!({"inputs": "hello", "parameters": {"max_new_tokens": 3, "temperature": 0.0}})
        );
    }

    #[test]
    fn tag_from_host() {
        let m = RemoteModel::new(
            "https://abc.endpoints.example.cloud/v1".into(),
            None,
            &EvaluatorConfig::remote("x"),
        );
        assert_eq!(m.tag(), "remote-abc-endpoints-example-cloud");
    }
}
