use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{BackendReply, ChatBackend, ChatTranscript, CompletionParams, GatewayError};

/// Replies with canned text when every `when` substring occurs in the
/// transcript. The n-th match of a rule returns `replies[n]`, repeating the
/// last reply once the list is exhausted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    #[serde(default)]
    pub when: Vec<String>,
    pub replies: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    rules: Vec<ScriptRule>,
    #[serde(default)]
    fallback: Option<String>,
}

/// Rule-based stub backend. Rules are tried in order; the first match wins.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    rules: Vec<(ScriptRule, AtomicUsize)>,
    fallback: Option<String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Always answers `reply`.
    pub fn constant(reply: impl Into<String>) -> Self {
        Self::new().with_fallback(reply)
    }

    pub fn rule<I, S>(mut self, when: I, replies: &[&str]) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.rules.push((
            ScriptRule {
                when: when.into_iter().map(Into::into).collect(),
                replies: replies.iter().map(|r| r.to_string()).collect(),
            },
            AtomicUsize::new(0),
        ));
        self
    }

    pub fn with_fallback(mut self, reply: impl Into<String>) -> Self {
        self.fallback = Some(reply.into());
        self
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let file: ScriptFile = serde_json::from_str(text).map_err(|e| GatewayError::Cassette {
            path: "<script>".into(),
            reason: e.to_string(),
        })?;
        if let Some(i) = file.rules.iter().position(|r| r.replies.is_empty()) {
            return Err(GatewayError::Cassette {
                path: "<script>".into(),
                reason: format!("rule {i} has no replies"),
            });
        }
        Ok(Self {
            rules: file.rules.into_iter().map(|r| (r, AtomicUsize::new(0))).collect(),
            fallback: file.fallback,
        })
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|source| GatewayError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            GatewayError::Cassette { reason, .. } => GatewayError::Cassette {
                path: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }
}

impl ChatBackend for ScriptedBackend {
    fn send(&self, transcript: &ChatTranscript, _params: &CompletionParams) -> Result<BackendReply, GatewayError> {
        let text = transcript.text();
        let content = self
            .rules
            .iter()
            .find(|(rule, _)| rule.when.iter().all(|w| text.contains(w.as_str())))
            .map(|(rule, hits)| {
                let n = hits.fetch_add(1, Ordering::SeqCst);
                rule.replies[n.min(rule.replies.len() - 1)].clone()
            })
            .or_else(|| self.fallback.clone())
            .ok_or(GatewayError::NoScriptedReply)?;
        Ok(BackendReply {
            content,
            usage: None,
            latency_secs: 0.0,
        })
    }
}

/// Backend driven by a closure over the transcript; handy in tests.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatTranscript) -> String + Send + Sync,
{
    fn send(&self, transcript: &ChatTranscript, _params: &CompletionParams) -> Result<BackendReply, GatewayError> {
        Ok(BackendReply {
            content: (self.0)(transcript),
            usage: None,
            latency_secs: 0.0,
        })
    }
}
