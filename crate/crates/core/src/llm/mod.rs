//! Text-generation backends.
//!
//! Every LLM-touching path goes through [`LlmBackend::complete`]. Besides the
//! HTTP chat-completion client there is a scripted mock, a closure-backed
//! mock and a record/replay pair, so whole pipeline runs can be reproduced
//! offline from a transcript file.

mod http;
mod replay;
mod scripted;
mod session;

pub use http::{HttpBackend, HttpConfig, ENV_API_KEY, ENV_BASE_URL, ENV_MODEL};
pub use replay::{RecordingBackend, ReplayBackend, Transcript, TranscriptEntry, TRANSCRIPT_SCHEMA_VERSION};
pub use scripted::{FnBackend, ScriptedBackend};
pub use session::Session;

use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
    Record,
    Replay,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BackendKind::Http => "http",
            BackendKind::Mock => "mock",
            BackendKind::Record => "record",
            BackendKind::Replay => "replay",
        };
        f.write_str(s)
    }
}

/// Sampling and transport settings that accompany every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendState {
    pub kind: BackendKind,
    pub model: String,
    pub temperature: f64,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    pub retry_budget: u32,
}

impl BackendState {
    pub fn new(kind: BackendKind, model: impl Into<String>) -> Self {
        Self {
            kind,
            model: model.into(),
            temperature: 0.0,
            timeout: Duration::from_secs(120),
            retry_budget: 4,
        }
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(secs.max(0.0)))
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request has no messages")]
    EmptyRequest,
    #[error("message {0} has empty content")]
    EmptyMessage(usize),
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("backend returned an unusable response: {0}")]
    BadResponse(String),
    #[error("scripted backend exhausted after {calls} call(s)")]
    QueueExhausted { calls: usize },
    #[error("replay diverged at request {index}: recorded digest {recorded}, got {actual}")]
    ReplayDivergence {
        index: usize,
        recorded: String,
        actual: String,
    },
    #[error("transcript exhausted at request {index}")]
    TranscriptExhausted { index: usize },
    #[error("transcript {path}: {message}")]
    Transcript { path: PathBuf, message: String },
    #[error("{0}")]
    Mock(String),
}

/// A text-generation endpoint. Implementations are safe to share across
/// threads; conversation state lives in [`Session`], not in the backend.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, messages: &[Message], state: &BackendState) -> Result<String, LlmError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn complete(&self, messages: &[Message], state: &BackendState) -> Result<String, LlmError> {
        (**self).complete(messages, state)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&self, messages: &[Message], state: &BackendState) -> Result<String, LlmError> {
        (**self).complete(messages, state)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<B> {
    fn complete(&self, messages: &[Message], state: &BackendState) -> Result<String, LlmError> {
        (**self).complete(messages, state)
    }
}

pub(crate) fn check_request(messages: &[Message]) -> Result<(), LlmError> {
    if messages.is_empty() {
        return Err(LlmError::EmptyRequest);
    }
    if let Some(i) = messages.iter().position(|m| m.content.is_empty()) {
        return Err(LlmError::EmptyMessage(i));
    }
    Ok(())
}

#[derive(Serialize)]
struct DigestInput<'a> {
    messages: &'a [Message],
    model: &'a str,
    temperature: f64,
}

/// SHA-256 over the canonical JSON of the messages plus the sampling state.
/// Transport settings and the backend kind are excluded so a recorded run
/// and its replay produce the same digests.
pub fn request_digest(messages: &[Message], state: &BackendState) -> String {
    crate::util::canonical_digest(&DigestInput {
        messages,
        model: &state.model,
        temperature: state.temperature,
    })
}
