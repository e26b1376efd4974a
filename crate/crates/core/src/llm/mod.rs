//! Chat-completion gateway.
//!
//! Every model call in the crate goes through [`complete`], which validates
//! the transcript, dispatches to a [`ChatBackend`] and fills in estimated
//! token usage when the backend does not report it. Three backends ship
//! with the crate:
//!
//! - [`LiveBackend`]: OpenAI-compatible HTTP endpoint.
//! - [`ReplayBackend`]: answers from a recorded cassette, keyed by request hash.
//! - [`ScriptedBackend`]: rule-based canned answers for tests and demos.
//!
//! [`RecordingBackend`] wraps any of them and appends each exchange to a
//! cassette.

mod cassette;
mod live;
mod scripted;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tokens::estimate_tokens;

pub use cassette::{
    load_cassette, request_hash, CassetteEntry, CassetteRequest, CassetteUsage, RecordingBackend, ReplayBackend,
};
pub use live::LiveBackend;
pub use scripted::{FnBackend, ScriptRule, ScriptedBackend};

/// Default price in dollars per thousand tokens.
pub const DEFAULT_PRICE_PER_1K: f64 = 0.003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
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

/// A system message followed by alternating user/assistant turns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTranscript {
    pub messages: Vec<ChatMessage>,
}

impl ChatTranscript {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
        }
    }

    pub fn push(&mut self, message: ChatMessage) {
        self.messages.push(message);
    }

    /// Checks role order and non-empty system/user content.
    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |reason: &str| Err(GatewayError::InvalidTranscript(reason.to_string()));
        let Some(first) = self.messages.first() else {
            return invalid("transcript is empty");
        };
        if first.role != Role::System {
            return invalid("first message must be the system instruction");
        }
        for (i, m) in self.messages.iter().enumerate().skip(1) {
            let expected = if i % 2 == 1 { Role::User } else { Role::Assistant };
            if m.role != expected {
                return invalid(&format!("message {i} should have role {expected:?}"));
            }
        }
        if self
            .messages
            .iter()
            .any(|m| m.role != Role::Assistant && m.content.trim().is_empty())
        {
            return invalid("system and user messages must not be empty");
        }
        Ok(())
    }

    /// Everything the model sees, for substring matching.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    /// Estimates usage of one exchange with the default tokenizer.
    pub fn estimate(transcript: &ChatTranscript, response: &str) -> Self {
        Self {
            prompt_tokens: transcript
                .messages
                .iter()
                .map(|m| estimate_tokens(&m.content) as u64)
                .sum(),
            completion_tokens: estimate_tokens(response) as u64,
        }
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

/// What a backend hands back for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub content: String,
    /// `None` when the backend does not report usage.
    pub usage: Option<TokenUsage>,
    /// Time spent waiting on the model. Replayed and scripted answers report 0.
    pub latency_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub message: ChatMessage,
    pub usage: TokenUsage,
    pub latency_secs: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend refused the request with status {status}: {body}")]
    BackendRefusal { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("no cassette entry for request {hash}")]
    ReplayMiss { hash: String },
    #[error("no scripted reply matches the request")]
    NoScriptedReply,
    #[error("invalid transcript: {0}")]
    InvalidTranscript(String),
    #[error("cassette {path}: {reason}")]
    Cassette { path: String, reason: String },
    #[error("cassette io on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A chat-completion provider. Implementations must tolerate concurrent
/// calls from independent runs.
pub trait ChatBackend: Send + Sync {
    fn send(&self, transcript: &ChatTranscript, params: &CompletionParams) -> Result<BackendReply, GatewayError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn send(&self, transcript: &ChatTranscript, params: &CompletionParams) -> Result<BackendReply, GatewayError> {
        (**self).send(transcript, params)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn send(&self, transcript: &ChatTranscript, params: &CompletionParams) -> Result<BackendReply, GatewayError> {
        (**self).send(transcript, params)
    }
}

/// Validates `transcript`, asks `backend` and returns the assistant turn.
pub fn complete(
    backend: &dyn ChatBackend,
    transcript: &ChatTranscript,
    params: &CompletionParams,
) -> Result<Completion, GatewayError> {
    transcript.validate()?;
    if transcript.messages.last().map(|m| m.role) != Some(Role::User) {
        return Err(GatewayError::InvalidTranscript(
            "last message must be a user turn".into(),
        ));
    }
    let reply = backend.send(transcript, params)?;
    let usage = reply
        .usage
        .unwrap_or_else(|| TokenUsage::estimate(transcript, &reply.content));
    Ok(Completion {
        message: ChatMessage::assistant(reply.content),
        usage,
        latency_secs: reply.latency_secs,
    })
}

/// Dollars for `tokens` at `price_per_1k`.
pub fn cost_of_tokens(tokens: u64, price_per_1k: f64) -> f64 {
    tokens as f64 / 1000.0 * price_per_1k
}

/// Token and time accounting for one bug.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub per_task: BTreeMap<String, TokenUsage>,
    pub wall_seconds: f64,
}

impl CostLedger {
    pub fn add(&mut self, task: &str, usage: TokenUsage, seconds: f64) {
        *self.per_task.entry(task.to_string()).or_default() += usage;
        self.wall_seconds += seconds;
    }

    pub fn merge(&mut self, other: &CostLedger) {
        for (task, usage) in &other.per_task {
            *self.per_task.entry(task.clone()).or_default() += *usage;
        }
        self.wall_seconds += other.wall_seconds;
    }

    pub fn total_tokens(&self) -> u64 {
        self.per_task.values().map(TokenUsage::total).sum()
    }

    pub fn dollars(&self, price_per_1k: f64) -> f64 {
        cost(self, price_per_1k)
    }
}

pub fn cost(ledger: &CostLedger, price_per_1k: f64) -> f64 {
    cost_of_tokens(ledger.total_tokens(), price_per_1k)
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stub_reply_gets_estimated_usage() {
        let backend = ScriptedBackend::constant("FALSE");
        let t = ChatTranscript::new("sys!", "user");
        let c = complete(&backend, &t, &CompletionParams::default()).unwrap();
        assert_eq!(c.message, ChatMessage::assistant("FALSE"));
        assert_eq!(
            c.usage,
            TokenUsage {
                prompt_tokens: 2,
                completion_tokens: 2
            }
        );
    }

    #[test]
    fn transcript_rules() {
        let mut t = ChatTranscript::new("s", "u");
        assert!(t.validate().is_ok());
        t.push(ChatMessage::user("again"));
        assert!(t.validate().is_err());
        let no_system = ChatTranscript {
            messages: vec![ChatMessage::user("u")],
        };
        assert!(no_system.validate().is_err());
        let empty_user = ChatTranscript::new("s", "  ");
        assert!(empty_user.validate().is_err());
        let mut ends_with_assistant = ChatTranscript::new("s", "u");
        ends_with_assistant.push(ChatMessage::assistant("a"));
        assert!(ends_with_assistant.validate().is_ok());
        let backend = ScriptedBackend::constant("x");
        assert!(complete(&backend, &ends_with_assistant, &CompletionParams::default()).is_err());
    }

    #[test]
    fn cost_examples() {
        let mut ledger = CostLedger::default();
        assert_eq!(cost(&ledger, DEFAULT_PRICE_PER_1K), 0.0);
        ledger.add(
            "T1",
            TokenUsage {
                prompt_tokens: 900,
                completion_tokens: 100,
            },
            0.0,
        );
        assert_eq!(cost(&ledger, DEFAULT_PRICE_PER_1K), 0.003);
        assert!((cost_of_tokens(50_000, DEFAULT_PRICE_PER_1K) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn ledger_totals_are_additive() {
        let mut a = CostLedger::default();
        a.add(
            "x/T1",
            TokenUsage {
                prompt_tokens: 5,
                completion_tokens: 1,
            },
            1.0,
        );
        a.add(
            "x/T1",
            TokenUsage {
                prompt_tokens: 5,
                completion_tokens: 1,
            },
            1.0,
        );
        let mut b = CostLedger::default();
        b.add(
            "y/T2",
            TokenUsage {
                prompt_tokens: 3,
                completion_tokens: 3,
            },
            0.5,
        );
        a.merge(&b);
        assert_eq!(a.total_tokens(), 18);
        assert_eq!(a.per_task.len(), 2);
        assert_eq!(a.wall_seconds, 2.5);
    }

    proptest! {
        #[test]
        fn cost_is_linear(tokens in 0u64..1_000_000, k in 1u64..100) {
            let single = cost_of_tokens(tokens, DEFAULT_PRICE_PER_1K);
            let scaled = cost_of_tokens(tokens * k, DEFAULT_PRICE_PER_1K);
            prop_assert!((scaled - k as f64 * single).abs() <= 1e-12 * scaled.max(1.0));
        }
    }
}
