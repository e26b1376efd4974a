//! Transcripts of every model exchange made while localizing one bug.

use std::io;
use std::path::Path;

use serde::Serialize;

use crate::agents::{AgentName, TaskId};
use crate::llm::{ChatMessage, Role, TokenUsage};

/// Run label used for bug-level tasks (top-1 selection).
pub const BUG_RUN: &str = "bug";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskTranscript {
    /// The failed test class this exchange belongs to, or [`BUG_RUN`].
    pub run: String,
    pub task: TaskId,
    /// 1-based position for tasks issued once per item (method review).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<usize>,
    pub agent: AgentName,
    /// Full conversation including re-asks and the final answer.
    pub messages: Vec<ChatMessage>,
    pub usage: TokenUsage,
}

impl TaskTranscript {
    /// User turns only; the first is the generated prompt.
    pub fn prompts(&self) -> impl Iterator<Item = &str> {
        self.messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn prompt(&self) -> &str {
        self.prompts().next().unwrap_or("")
    }

    fn file_name(&self) -> String {
        match self.item {
            Some(i) => format!("{}_{:02}.json", self.task, i),
            None => format!("{}.json", self.task),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunLog {
    pub entries: Vec<TaskTranscript>,
}

pub fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

impl RunLog {
    pub fn for_task(&self, task: TaskId) -> impl Iterator<Item = &TaskTranscript> {
        self.entries.iter().filter(move |e| e.task == task)
    }

    pub fn push(&mut self, entry: TaskTranscript) {
        self.entries.push(entry);
    }

    pub fn extend(&mut self, other: RunLog) {
        self.entries.extend(other.entries);
    }

    /// Writes one JSON file per task per run under `dir`, in
    /// `<nn>_<run>/<task>.json` subdirectories numbered by run order.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        let mut runs: Vec<&str> = Vec::new();
        for entry in &self.entries {
            let pos = match runs.iter().position(|r| *r == entry.run) {
                Some(p) => p,
                None => {
                    runs.push(&entry.run);
                    runs.len() - 1
                }
            };
            let sub = dir.join(format!("{:02}_{}", pos + 1, sanitize(&entry.run)));
            std::fs::create_dir_all(&sub)?;
            let mut json = serde_json::to_string_pretty(entry).expect("transcript serializes");
            json.push('\n');
            std::fs::write(sub.join(entry.file_name()), json)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_one_file_per_task() {
        let entry = |run: &str, task, item| TaskTranscript {
            run: run.into(),
            task,
            item,
            agent: AgentName::SoftwareTestEngineer,
            messages: vec![
                ChatMessage::system("s"),
                ChatMessage::user("p"),
                ChatMessage::assistant("a"),
            ],
            usage: TokenUsage::default(),
        };
        let log = RunLog {
            entries: vec![
                entry("p.ATest", TaskId::T2, None),
                entry("p.ATest", TaskId::T6, Some(1)),
                entry("p.ATest", TaskId::T6, Some(2)),
                entry(BUG_RUN, TaskId::T7, None),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        log.write_to(dir.path()).unwrap();
        assert!(dir.path().join("01_p.ATest/T2.json").exists());
        assert!(dir.path().join("01_p.ATest/T6_02.json").exists());
        assert!(dir.path().join("02_bug/T7.json").exists());
        assert_eq!(log.entries[0].prompt(), "p");
    }
}
