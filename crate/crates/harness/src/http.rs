//! Chat-completions style HTTP adapter.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::client::{ModelClient, ModelRequest, TransportError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpModelConfig {
    /// Identifier used in records and output paths.
    pub id: String,
    /// Full endpoint URL, e.g. `https://host/v1/chat/completions`.
    pub url: String,
    /// Value of the `model` field in the request body.
    pub model: String,
    /// Environment variable holding the bearer token; no auth header if unset.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub temperature: Option<f64>,
}

fn default_timeout() -> f64 {
    120.0
}

pub struct HttpModel {
    config: HttpModelConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpModel {
    /// Fails if `auth_env` names a variable that is not set.
    pub fn new(config: HttpModelConfig) -> Result<Self, String> {
        let token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| format!("model `{}`: environment variable {var} is not set", config.id))?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpModel { config, token, agent })
    }

    pub fn request_body(&self, req: &ModelRequest) -> Result<Value, TransportError> {
        let mut content = vec![json!({"type": "text", "text": req.prompt})];
        for path in &req.images {
            let bytes = std::fs::read(path).map_err(|e| TransportError(format!("reading {}: {e}", path.display())))?;
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{}", STANDARD.encode(bytes))}
            }));
        }
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
        });
        if let Some(n) = self.config.max_tokens {
            body["max_tokens"] = json!(n);
        }
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        Ok(body)
    }
}

/// Text of the first choice. Content may be a string or a list of parts.
pub fn reply_text(body: &Value) -> Option<String> {
    let content = body.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<Vec<_>>().join("")),
        _ => None,
    }
}

impl ModelClient for HttpModel {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn complete(&self, req: &ModelRequest) -> Result<String, TransportError> {
        let body = self.request_body(req)?;
        let mut call = self.agent.post(&self.config.url).header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = call.send(body.to_string()).map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| TransportError(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| TransportError(format!("malformed response: {e}")))?;
        reply_text(&value).ok_or_else(|| TransportError("response has no choices[0].message.content".into()))
    }
}
