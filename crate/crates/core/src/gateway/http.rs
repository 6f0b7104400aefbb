use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendConfig, RetryPolicy, TransportStatus};

/// Client for completion-style endpoints of OpenAI-compatible servers.
///
/// Sends `{model, prompt, max_tokens, temperature: 0}` and reads the first
/// choice's `text` (or `message.content` for chat-shaped replies).
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpBackend {
    /// `config.endpoint_url` must be set; see [`BackendConfig::validate`].
    pub fn new(config: BackendConfig) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.request_timeout_secs))
            .build()
            .expect("TLS backend available");
        let api_key = config.api_key_env.as_deref().and_then(|name| match std::env::var(name) {
            Ok(key) => Some(key),
            Err(_) => {
                log::warn!("environment variable {name} is not set; sending requests without credentials");
                None
            }
        });
        HttpBackend { config, client, api_key }
    }

    fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.config.model_id,
            "prompt": prompt,
            "max_tokens": self.config.max_new_tokens,
            "temperature": 0.0,
        })
    }
}

fn completion_text(body: &Value) -> Option<String> {
    let choice = body.get("choices")?.get(0)?;
    choice.get("text").or_else(|| choice.get("message")?.get("content"))?.as_str().map(str::to_string)
}

impl Backend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn complete(&self, prompt: &str) -> Result<String, TransportStatus> {
        let url = self.config.endpoint_url.as_deref().ok_or(TransportStatus::Unreachable)?;
        let mut request = self.client.post(url).json(&self.request_body(prompt));
        if let Some(key) = &self.api_key {
            let value = if self.config.auth_header.eq_ignore_ascii_case("authorization") {
                format!("Bearer {key}")
            } else {
                key.clone()
            };
            request = request.header(self.config.auth_header.as_str(), value);
        }

        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                TransportStatus::Timeout
            } else {
                log::debug!("{}: request failed: {e}", self.config.model_id);
                TransportStatus::Unreachable
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(TransportStatus::HttpError(status.as_u16()));
        }
        let body: Value =
            response.json().map_err(
                |e| {
                    if e.is_timeout() {
                        TransportStatus::Timeout
                    } else {
                        TransportStatus::Empty
                    }
                },
            )?;
        completion_text(&body).ok_or(TransportStatus::Empty)
    }

    fn retry_policy(&self) -> RetryPolicy {
        self.config.retry_policy()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_completion_and_chat_shapes() {
        let completion = json!({"choices": [{"text": " Yes", "index": 0}]});
        assert_eq!(completion_text(&completion).as_deref(), Some(" Yes"));
        let chat = json!({"choices": [{"message": {"role": "assistant", "content": "No."}}]});
        assert_eq!(completion_text(&chat).as_deref(), Some("No."));
        assert_eq!(completion_text(&json!({"choices": []})), None);
        assert_eq!(completion_text(&json!({"error": "x"})), None);
    }

    #[test]
    fn body_is_greedy() {
        let mut config = BackendConfig::new(super::super::BackendKind::HttpCompletion, "gemma-2-2b-it");
        config.endpoint_url = Some("http://127.0.0.1:1/v1/completions".into());
        let backend = HttpBackend::new(config);
        let body = backend.request_body("P");
        assert_eq!(body, json!({"model": "gemma-2-2b-it", "prompt": "P", "max_tokens": 8, "temperature": 0.0}));
    }
}
