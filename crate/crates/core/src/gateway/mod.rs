// SPDX-License-Identifier: Apache-2.0

//! Access to text-generation backends with record/replay.

mod conversation;
mod http;
mod trace;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use conversation::{estimate_tokens, fit_context, Conversation, Message, Role};
pub use http::HttpBackend;
pub use trace::{request_key, TraceMode, TraceRecord, TraceStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub model_id: String,
    pub temperature: f64,
    /// Prompt budget in estimated tokens.
    pub context_limit: usize,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model_id: "gpt-4".to_string(),
            temperature: 0.7,
            context_limit: 2048,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidParams(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.context_limit == 0 {
            return Err(GatewayError::InvalidParams("context_limit must be positive".into()));
        }
        Ok(())
    }
}

/// What a backend sees for one completion.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub model_id: &'a str,
    pub temperature: f64,
    pub sample: u32,
    pub messages: &'a [Message],
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection resets, 429, 5xx.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Fatal(String),
}

/// A chat-completion provider. Must tolerate concurrent calls.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_backoff_ms: 500,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("cannot append {attempted:?} after {previous:?}")]
    RoleOrderViolation { previous: Option<Role>, attempted: Role },
    #[error("conversation does not end with a user message")]
    NotAwaitingResponse,
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: u32, message: String },
    #[error("replay miss: no recorded response for request {digest}")]
    ReplayMiss { digest: String },
    #[error("context overflow: {estimate} estimated tokens exceed limit {limit}")]
    ContextOverflow { estimate: usize, limit: usize },
    #[error("{0} mode needs a backend")]
    NoBackend(&'static str),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("trace file {}: {source}", .path.display())]
    TraceIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trace record: {0}")]
    TraceFormat(String),
}

impl GatewayError {
    pub(crate) fn trace(path: &Path, source: std::io::Error) -> Self {
        GatewayError::TraceIo {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Errors that end the whole run rather than one candidate.
    pub fn is_run_fatal(&self) -> bool {
        !matches!(
            self,
            GatewayError::BackendUnavailable { .. } | GatewayError::ContextOverflow { .. }
        )
    }
}

/// Routes generation requests to a live backend, a trace, or both.
pub struct Gateway {
    mode: TraceMode,
    backend: Option<Arc<dyn Backend>>,
    trace: Option<TraceStore>,
    retry: RetryPolicy,
}

impl Gateway {
    pub fn live(backend: Arc<dyn Backend>, retry: RetryPolicy) -> Self {
        Self {
            mode: TraceMode::Live,
            backend: Some(backend),
            trace: None,
            retry,
        }
    }

    pub fn record(backend: Arc<dyn Backend>, trace: TraceStore, retry: RetryPolicy) -> Self {
        Self {
            mode: TraceMode::Record,
            backend: Some(backend),
            trace: Some(trace),
            retry,
        }
    }

    pub fn replay(trace: TraceStore) -> Self {
        Self {
            mode: TraceMode::Replay,
            backend: None,
            trace: Some(trace),
            retry: RetryPolicy::default(),
        }
    }

    pub fn mode(&self) -> TraceMode {
        self.mode
    }

    pub fn trace(&self) -> Option<&TraceStore> {
        self.trace.as_ref()
    }

    /// Produce the assistant reply to `conv` for candidate `sample`.
    ///
    /// Old user/assistant pairs are dropped from the request when the
    /// estimate exceeds `params.context_limit`.
    pub fn generate(
        &self,
        conv: &Conversation,
        params: &GenerationParams,
        sample: u32,
    ) -> Result<String, GatewayError> {
        if conv.last_role() != Some(Role::User) {
            return Err(GatewayError::NotAwaitingResponse);
        }
        let window = fit_context(&conv.messages, params.context_limit)?;
        let key = request_key(&params.model_id, params.temperature, sample, &window);

        if self.mode == TraceMode::Replay {
            let trace = self.trace.as_ref().ok_or(GatewayError::NoBackend("replay"))?;
            return trace.lookup(&key).ok_or(GatewayError::ReplayMiss { digest: key });
        }

        let backend = self.backend.as_ref().ok_or(GatewayError::NoBackend("live"))?;
        let request = CompletionRequest {
            model_id: &params.model_id,
            temperature: params.temperature,
            sample,
            messages: &window,
        };
        let response = self.call_with_retry(backend.as_ref(), &request)?;
        if let Some(trace) = &self.trace {
            trace.record(&TraceRecord {
                key_digest: key,
                model_id: params.model_id.clone(),
                temperature: params.temperature,
                sample,
                conversation_snapshot: window,
                response: response.clone(),
            })?;
        }
        Ok(response)
    }

    fn call_with_retry(&self, backend: &dyn Backend, request: &CompletionRequest<'_>) -> Result<String, GatewayError> {
        let attempts = self.retry.attempts.max(1);
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                let wait = self.retry.base_backoff_ms.saturating_mul(1 << (n - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match backend.complete(request) {
                Ok(text) if !text.trim().is_empty() => return Ok(text),
                Ok(_) => last = "empty response".to_string(),
                Err(BackendError::Transient(msg)) => last = msg,
                Err(BackendError::Fatal(message)) => {
                    return Err(GatewayError::BackendUnavailable {
                        attempts: n + 1,
                        message,
                    })
                }
            }
            log::warn!("generation attempt {} of {} failed: {last}", n + 1, attempts);
        }
        Err(GatewayError::BackendUnavailable {
            attempts,
            message: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    impl Backend for Flaky {
        fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(BackendError::Transient(format!("503 #{n}")))
            } else {
                Ok(format!("reply to {} messages", req.messages.len()))
            }
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            base_backoff_ms: 1,
        }
    }

    fn conv() -> Conversation {
        Conversation::new(Some("sys"), "adder")
            .append(Role::User, "write an adder")
            .unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(GenerationParams::default().validate().is_ok());
        let bad = GenerationParams {
            temperature: 2.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = GenerationParams {
            context_limit: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let backend = Arc::new(Flaky {
            failures: 2,
            calls: AtomicU32::new(0),
        });
        let gw = Gateway::live(backend.clone(), fast_retry());
        let out = gw.generate(&conv(), &GenerationParams::default(), 1).unwrap();
        assert_eq!(out, "reply to 2 messages");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_policy() {
        let backend = Arc::new(Flaky {
            failures: 10,
            calls: AtomicU32::new(0),
        });
        let gw = Gateway::live(backend.clone(), fast_retry());
        let err = gw.generate(&conv(), &GenerationParams::default(), 1).unwrap_err();
        assert!(matches!(err, GatewayError::BackendUnavailable { attempts: 3, .. }));
        assert!(!err.is_run_fatal());
    }

    #[test]
    fn record_then_replay_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let backend = Arc::new(Flaky {
            failures: 0,
            calls: AtomicU32::new(0),
        });
        let params = GenerationParams::default();
        let recorded = {
            let gw = Gateway::record(backend, TraceStore::open_record(&path).unwrap(), fast_retry());
            gw.generate(&conv(), &params, 2).unwrap()
        };
        let gw = Gateway::replay(TraceStore::open_replay(&path).unwrap());
        assert_eq!(gw.generate(&conv(), &params, 2).unwrap(), recorded);
        match gw.generate(&conv(), &params, 3) {
            Err(e @ GatewayError::ReplayMiss { .. }) => {
                let GatewayError::ReplayMiss { digest } = &e else {
                    unreachable!()
                };
                assert_eq!(digest.len(), 64);
                assert!(e.to_string().contains(digest.as_str()));
                assert!(e.is_run_fatal());
            }
            other => panic!("expected replay miss, got {other:?}"),
        }
    }

    #[test]
    fn refuses_when_not_awaiting() {
        let gw = Gateway::replay(TraceStore::in_memory());
        let c = Conversation::new(None, "d");
        assert!(matches!(
            gw.generate(&c, &GenerationParams::default(), 1),
            Err(GatewayError::NotAwaitingResponse)
        ));
    }
}
