//! HTTPS chat-completion backends. Credentials come from the environment and
//! are never logged or serialized.

use std::fmt;

use serde_json::{json, Value};

use super::{Backend, BackendError, CompletionRequest};

pub const OPENAI_API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const OPENAI_BASE_URL_ENV: &str = "OPENAI_BASE_URL";
pub const ANTHROPIC_API_KEY_ENV: &str = "ANTHROPIC_API_KEY";

const ANTHROPIC_URL: &str = "https://api.anthropic.com/v1/messages";
const ANTHROPIC_VERSION: &str = "2023-06-01";
const OPENAI_DEFAULT_BASE: &str = "https://api.openai.com/v1";

pub(super) fn is_anthropic_model(model_id: &str) -> bool {
    let m = model_id.to_ascii_lowercase();
    m.contains("claude") || m.contains("anthropic")
}

fn env_key(name: &str) -> Result<String, BackendError> {
    std::env::var(name)
        .ok()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| BackendError::Fatal(format!("environment variable {name} is not set")))
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::new()
}

fn send(builder: reqwest::blocking::RequestBuilder, req: &CompletionRequest) -> Result<Value, BackendError> {
    let resp = builder.timeout(req.timeout).send().map_err(|e| {
        if e.is_timeout() {
            BackendError::Timeout(req.timeout)
        } else {
            BackendError::Transport(e.to_string())
        }
    })?;
    let status = resp.status();
    let body = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
    if !status.is_success() {
        return Err(BackendError::Status {
            status: status.as_u16(),
            body,
        });
    }
    serde_json::from_str(&body).map_err(|e| BackendError::Fatal(format!("unparseable response body: {e}")))
}

/// Anthropic Messages API.
pub struct AnthropicBackend {
    api_key: String,
    url: String,
}

impl fmt::Debug for AnthropicBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnthropicBackend").field("url", &self.url).finish_non_exhaustive()
    }
}

impl AnthropicBackend {
    pub fn from_env() -> Result<Self, BackendError> {
        Ok(Self {
            api_key: env_key(ANTHROPIC_API_KEY_ENV)?,
            url: ANTHROPIC_URL.to_string(),
        })
    }

    pub fn request_body(req: &CompletionRequest) -> Value {
        json!({
            "model": req.model_id,
            "max_tokens": req.max_output_tokens,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": req.prompt}],
        })
    }

    pub fn response_text(body: &Value) -> Result<String, BackendError> {
        let blocks = body["content"]
            .as_array()
            .ok_or_else(|| BackendError::Fatal("response has no content array".into()))?;
        let text: String = blocks.iter().filter_map(|b| b["text"].as_str()).collect();
        if text.is_empty() {
            return Err(BackendError::Fatal("response has no text blocks".into()));
        }
        Ok(text)
    }
}

impl Backend for AnthropicBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let builder = client()
            .post(&self.url)
            .header("x-api-key", &self.api_key)
            .header("anthropic-version", ANTHROPIC_VERSION)
            .json(&Self::request_body(req));
        Self::response_text(&send(builder, req)?)
    }
}

/// OpenAI-compatible `/chat/completions` endpoint.
pub struct OpenAiBackend {
    api_key: String,
    base_url: String,
}

impl fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiBackend").field("base_url", &self.base_url).finish_non_exhaustive()
    }
}

impl OpenAiBackend {
    pub fn from_env() -> Result<Self, BackendError> {
        Ok(Self {
            api_key: env_key(OPENAI_API_KEY_ENV)?,
            base_url: std::env::var(OPENAI_BASE_URL_ENV).unwrap_or_else(|_| OPENAI_DEFAULT_BASE.to_string()),
        })
    }

    pub fn request_body(req: &CompletionRequest) -> Value {
        json!({
            "model": req.model_id,
            "max_completion_tokens": req.max_output_tokens,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": req.prompt}],
        })
    }

    pub fn response_text(body: &Value) -> Result<String, BackendError> {
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Fatal("response has no choices[0].message.content".into()))
    }
}

impl Backend for OpenAiBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let builder = client()
            .post(url)
            .bearer_auth(&self.api_key)
            .json(&Self::request_body(req));
        Self::response_text(&send(builder, req)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anthropic_shapes() {
        let req = CompletionRequest::new("us.anthropic.claude-opus-4-5-20251101-v1:0", "hello");
        let body = AnthropicBackend::request_body(&req);
        assert_eq!(body["messages"][0]["content"], "hello");
        assert_eq!(body["model"], "us.anthropic.claude-opus-4-5-20251101-v1:0");
        let resp = json!({"content": [{"type": "text", "text": "{\"a\":1}"}]});
        assert_eq!(AnthropicBackend::response_text(&resp).unwrap(), "{\"a\":1}");
        assert!(AnthropicBackend::response_text(&json!({})).is_err());
        assert!(is_anthropic_model(&req.model_id));
    }

    #[test]
    fn openai_shapes() {
        let req = CompletionRequest::new("gpt-5-mini-2025-08-07", "hi");
        assert_eq!(OpenAiBackend::request_body(&req)["max_completion_tokens"], 16_000);
        let resp = json!({"choices": [{"message": {"content": "x"}}]});
        assert_eq!(OpenAiBackend::response_text(&resp).unwrap(), "x");
        assert!(!is_anthropic_model(&req.model_id));
    }

    #[test]
    fn debug_output_hides_key() {
        let b = OpenAiBackend {
            api_key: "sk-secret".into(),
            base_url: "http://x".into(),
        };
        assert!(!format!("{b:?}").contains("sk-secret"));
    }
}
