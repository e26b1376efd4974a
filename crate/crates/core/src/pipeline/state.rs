//! Per-run state storage. Each slot holds the parsed output of one task and
//! can be written once.

use indexmap::IndexMap;
use serde::Serialize;

use crate::agents::TaskId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Review {
    pub signature: String,
    pub verdict: bool,
    pub reason: Option<String>,
    /// The answer needed a re-ask and still did not parse.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("state slot for {0} was already written")]
pub struct SlotWritten(pub TaskId);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunState {
    test_behavior: Option<String>,
    possible_causes: Option<Vec<String>>,
    suspicious_class: Option<String>,
    enhanced_docs: Option<IndexMap<String, String>>,
    related_methods: Option<Vec<String>>,
    reviews: Vec<Review>,
}

fn write_once<T>(slot: &mut Option<T>, value: T, task: TaskId) -> Result<(), SlotWritten> {
    if slot.is_some() {
        return Err(SlotWritten(task));
    }
    *slot = Some(value);
    Ok(())
}

impl RunState {
    pub fn set_test_behavior(&mut self, v: String) -> Result<(), SlotWritten> {
        write_once(&mut self.test_behavior, v, TaskId::T1)
    }

    pub fn set_possible_causes(&mut self, v: Vec<String>) -> Result<(), SlotWritten> {
        write_once(&mut self.possible_causes, v, TaskId::T2)
    }

    pub fn set_suspicious_class(&mut self, v: String) -> Result<(), SlotWritten> {
        write_once(&mut self.suspicious_class, v, TaskId::T3)
    }

    pub fn set_enhanced_docs(&mut self, v: IndexMap<String, String>) -> Result<(), SlotWritten> {
        write_once(&mut self.enhanced_docs, v, TaskId::T4)
    }

    pub fn set_related_methods(&mut self, v: Vec<String>) -> Result<(), SlotWritten> {
        write_once(&mut self.related_methods, v, TaskId::T5)
    }

    /// Reviews are appended one method at a time.
    pub fn push_review(&mut self, review: Review) {
        self.reviews.push(review);
    }

    pub fn test_behavior(&self) -> Option<&str> {
        self.test_behavior.as_deref()
    }

    pub fn possible_causes(&self) -> Option<&[String]> {
        self.possible_causes.as_deref()
    }

    pub fn suspicious_class(&self) -> Option<&str> {
        self.suspicious_class.as_deref()
    }

    pub fn enhanced_docs(&self) -> Option<&IndexMap<String, String>> {
        self.enhanced_docs.as_ref()
    }

    pub fn related_methods(&self) -> Option<&[String]> {
        self.related_methods.as_deref()
    }

    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }
}
