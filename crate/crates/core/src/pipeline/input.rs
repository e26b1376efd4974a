use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::index::CodebaseIndex;
use crate::tokens::truncate_to_tokens;
use crate::trace::ScopedCoverage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailedTest {
    /// `ClassFQN::testMethod`; a bare method name is qualified on load.
    pub id: String,
    pub code: String,
    pub stack: String,
    pub output: String,
}

impl FailedTest {
    /// The test method name after `::`.
    pub fn method(&self) -> &str {
        self.id.rsplit("::").next().unwrap_or(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailedTestClass {
    #[serde(rename = "fqn")]
    pub class_fqn: String,
    #[serde(rename = "tests")]
    pub failed_tests: Vec<FailedTest>,
}

/// The failures JSON file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Failures {
    pub bug_id: String,
    pub classes: Vec<FailedTestClass>,
}

#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Schema { path: PathBuf, reason: String },
}

impl Failures {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let mut failures: Failures = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if failures.bug_id.trim().is_empty() {
            return Err("empty bug_id".into());
        }
        if failures.classes.is_empty() {
            return Err("no failed test classes".into());
        }
        for class in &mut failures.classes {
            if class.failed_tests.is_empty() {
                return Err(format!("class {} lists no failed tests", class.class_fqn));
            }
            for test in &mut class.failed_tests {
                if !test.id.contains("::") {
                    test.id = format!("{}::{}", class.class_fqn, test.id);
                }
            }
        }
        Ok(failures)
    }
}

pub fn load_failures(path: &Path) -> Result<Failures, InputError> {
    let text = std::fs::read_to_string(path).map_err(|source| InputError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Failures::from_json(&text).map_err(|reason| InputError::Schema {
        path: path.to_path_buf(),
        reason,
    })
}

/// Everything needed to localize one bug.
#[derive(Debug, Clone)]
pub struct BugInput {
    pub bug_id: String,
    pub failed_test_classes: Vec<FailedTestClass>,
    pub index: Arc<CodebaseIndex>,
    pub coverage: Arc<ScopedCoverage>,
}

impl BugInput {
    pub fn new(failures: Failures, index: Arc<CodebaseIndex>, coverage: Arc<ScopedCoverage>) -> Self {
        Self {
            bug_id: failures.bug_id,
            failed_test_classes: failures.classes,
            index,
            coverage,
        }
    }
}

/// A failed test class after applying the prompt limits: at most
/// `max_failed_tests` tests, each output truncated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedClass {
    pub class_fqn: String,
    pub tests: Vec<FailedTest>,
    pub dropped_tests: usize,
}

impl PreparedClass {
    pub fn new(class: &FailedTestClass, max_failed_tests: usize, output_tokens: usize) -> Self {
        let tests = class
            .failed_tests
            .iter()
            .take(max_failed_tests)
            .map(|t| FailedTest {
                output: truncate_to_tokens(&t.output, output_tokens),
                ..t.clone()
            })
            .collect();
        Self {
            class_fqn: class.class_fqn.clone(),
            tests,
            dropped_tests: class.failed_tests.len().saturating_sub(max_failed_tests),
        }
    }

    pub fn test_ids(&self) -> Vec<&str> {
        self.tests.iter().map(|t| t.id.as_str()).collect()
    }
}
