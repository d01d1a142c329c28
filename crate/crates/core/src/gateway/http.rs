// SPDX-License-Identifier: Apache-2.0

//! Chat-completions style HTTP backend.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendError, CompletionRequest};

pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    /// `api_key_env` names the environment variable holding the bearer
    /// token; an unset variable means no `Authorization` header.
    pub fn new(endpoint: impl Into<String>, api_key_env: Option<&str>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            api_key: api_key_env
                .and_then(|v| std::env::var(v).ok())
                .filter(|k| !k.is_empty()),
            agent,
        }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let messages: Vec<Value> = req
            .messages
            .iter()
            .map(|m| json!({ "role": m.role.as_str(), "content": m.content }))
            .collect();
        let body = json!({
            "model": req.model_id,
            "temperature": req.temperature,
            "n": 1,
            "messages": messages,
        });
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send_json(&body).map_err(classify_transport)?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(BackendError::Transient(format!("http status {status}")));
        }
        if status >= 400 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::Fatal(format!("http status {status}: {}", text.trim())));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transient(format!("unreadable response body: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Fatal("response has no choices[0].message.content".into()))
    }
}

fn classify_transport(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_)
        | ureq::Error::Io(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound
        | ureq::Error::BodyStalled => BackendError::Transient(e.to_string()),
        other => BackendError::Fatal(other.to_string()),
    }
}
