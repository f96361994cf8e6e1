//! Live text generation against an OpenAI-style chat completions endpoint.

use std::time::Duration;

use genji_core::dialogue::{GenerateError, PromptBundle, TextGenerator};
use serde_json::{json, Value};

pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(20);

#[derive(Debug, Clone)]
pub struct LiveClient {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    agent: ureq::Agent,
}

impl LiveClient {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Self {
        let agent =
            ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into();
        Self { endpoint: endpoint.into(), model: model.into(), api_key, timeout, agent }
    }

    /// Reads `LLM_ENDPOINT`, `LLM_MODEL` and `LLM_API_KEY`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("LLM_ENDPOINT").ok()?;
        let model = std::env::var("LLM_MODEL").unwrap_or_else(|_| DEFAULT_MODEL.into());
        Some(Self::new(endpoint, model, std::env::var("LLM_API_KEY").ok(), DEFAULT_TIMEOUT))
    }

    pub fn request_body(&self, bundle: &PromptBundle) -> Value {
        json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": format!("You are {}. {}", bundle.persona_name, bundle.preamble)},
                {"role": "user", "content": bundle.render()},
            ],
        })
    }
}

fn fail(message: impl Into<String>, retry_after_s: Option<u64>) -> GenerateError {
    GenerateError { message: message.into(), retry_after_s }
}

/// Text of the first choice of a chat completion response.
pub fn extract_text(body: &Value) -> Option<String> {
    let text = body.pointer("/choices/0/message/content")?.as_str()?.trim();
    (!text.is_empty()).then(|| text.to_string())
}

impl TextGenerator for LiveClient {
    fn generate(&self, bundle: &PromptBundle) -> Result<String, GenerateError> {
        let mut req = self.agent.post(&self.endpoint).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(self.request_body(bundle)).map_err(|e| fail(e.to_string(), None))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let retry =
                resp.headers().get("retry-after").and_then(|v| v.to_str().ok()).and_then(|v| v.trim().parse().ok());
            return Err(fail(format!("endpoint returned status {status}"), retry));
        }
        let body: Value = resp.body_mut().read_json().map_err(|e| fail(e.to_string(), None))?;
        extract_text(&body).ok_or_else(|| fail("response carried no message content", None))
    }
}
