//! Cassette recording and replay.
//!
//! A cassette is a JSONL file with one exchange per line. Entries are keyed
//! by the SHA-256 of the canonical request JSON (sorted keys, verbatim
//! message content), so line order in the file is irrelevant.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendReply, ChatBackend, ChatMessage, ChatTranscript, CompletionParams, GatewayError, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CassetteRequest {
    pub fn new(transcript: &ChatTranscript, params: &CompletionParams) -> Self {
        Self {
            messages: transcript.messages.clone(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteUsage {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteEntry {
    pub hash: String,
    pub request: CassetteRequest,
    pub response: String,
    pub usage: CassetteUsage,
}

impl CassetteEntry {
    /// The `record` operation: builds the entry for one exchange.
    pub fn record(transcript: &ChatTranscript, params: &CompletionParams, response: &str, usage: TokenUsage) -> Self {
        let request = CassetteRequest::new(transcript, params);
        Self {
            hash: hash_request(&request),
            request,
            response: response.to_string(),
            usage: CassetteUsage {
                prompt: usage.prompt_tokens,
                completion: usage.completion_tokens,
            },
        }
    }
}

fn hash_request(request: &CassetteRequest) -> String {
    // serde_json::Value keeps object keys sorted, which makes this canonical.
    let canonical = serde_json::to_value(request).expect("request serializes");
    let bytes = serde_json::to_vec(&canonical).expect("value serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Stable content hash of a request.
pub fn request_hash(transcript: &ChatTranscript, params: &CompletionParams) -> String {
    hash_request(&CassetteRequest::new(transcript, params))
}

/// Loads every entry of a cassette file, checking each stored hash.
pub fn load_cassette(path: &Path) -> Result<Vec<CassetteEntry>, GatewayError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| GatewayError::Io {
        path: display.clone(),
        source,
    })?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| GatewayError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| GatewayError::Cassette {
            path: display.clone(),
            reason: format!("line {}: {e}", i + 1),
        })?;
        let expected = hash_request(&entry.request);
        if entry.hash != expected {
            return Err(GatewayError::Cassette {
                path: display.clone(),
                reason: format!("line {}: stored hash {} does not match request", i + 1, entry.hash),
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Answers strictly from a cassette.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    entries: HashMap<String, CassetteEntry>,
}

impl ReplayBackend {
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::from_entries(load_cassette(path)?))
    }

    /// First entry wins when a hash is repeated.
    pub fn from_entries(entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        let mut map = HashMap::new();
        for e in entries {
            map.entry(e.hash.clone()).or_insert(e);
        }
        Self { entries: map }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn send(&self, transcript: &ChatTranscript, params: &CompletionParams) -> Result<BackendReply, GatewayError> {
        let hash = request_hash(transcript, params);
        let entry = self.entries.get(&hash).ok_or(GatewayError::ReplayMiss { hash })?;
        Ok(BackendReply {
            content: entry.response.clone(),
            usage: Some(TokenUsage {
                prompt_tokens: entry.usage.prompt,
                completion_tokens: entry.usage.completion,
            }),
            latency_secs: 0.0,
        })
    }
}

struct Writer {
    file: File,
    seen: HashSet<String>,
}

/// Forwards to an inner backend and appends every new exchange to a
/// cassette file.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    writer: Mutex<Writer>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, path: &Path) -> Result<Self, GatewayError> {
        let seen = if path.exists() {
            load_cassette(path)?.into_iter().map(|e| e.hash).collect()
        } else {
            HashSet::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| GatewayError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            writer: Mutex::new(Writer { file, seen }),
        })
    }

    fn append(&self, entry: &CassetteEntry) -> Result<(), GatewayError> {
        let io = |source| GatewayError::Io {
            path: self.path.display().to_string(),
            source,
        };
        let mut writer = self.writer.lock().expect("cassette writer poisoned");
        if !writer.seen.insert(entry.hash.clone()) {
            return Ok(());
        }
        let mut line = serde_json::to_string(entry).expect("entry serializes");
        line.push('\n');
        writer.file.lock().map_err(io)?;
        let written = writer.file.write_all(line.as_bytes()).and_then(|_| writer.file.flush());
        writer.file.unlock().map_err(io)?;
        written.map_err(io)
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn send(&self, transcript: &ChatTranscript, params: &CompletionParams) -> Result<BackendReply, GatewayError> {
        let mut reply = self.inner.send(transcript, params)?;
        let usage = reply
            .usage
            .unwrap_or_else(|| TokenUsage::estimate(transcript, &reply.content));
        reply.usage = Some(usage);
        self.append(&CassetteEntry::record(transcript, params, &reply.content, usage))?;
        Ok(reply)
    }
}
