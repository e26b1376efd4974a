//! The four agent roles and which pipeline task each one serves.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentName {
    TestCodeReviewer,
    SourceCodeReviewer,
    SoftwareArchitect,
    SoftwareTestEngineer,
}

impl AgentName {
    pub const ALL: [AgentName; 4] = [
        AgentName::TestCodeReviewer,
        AgentName::SourceCodeReviewer,
        AgentName::SoftwareArchitect,
        AgentName::SoftwareTestEngineer,
    ];
}

impl fmt::Display for AgentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentName::TestCodeReviewer => "Test Code Reviewer",
            AgentName::SourceCodeReviewer => "Source Code Reviewer",
            AgentName::SoftwareArchitect => "Software Architect",
            AgentName::SoftwareTestEngineer => "Software Test Engineer",
        })
    }
}

/// The seven pipeline tasks, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskId {
    /// Test behavior analysis.
    T1,
    /// Test failure analysis.
    T2,
    /// Suspicious class search.
    T3,
    /// Method doc enhancement.
    T4,
    /// Related method search.
    T5,
    /// Method review.
    T6,
    /// Top-1 selection.
    T7,
}

impl TaskId {
    pub const ALL: [TaskId; 7] = [
        TaskId::T1,
        TaskId::T2,
        TaskId::T3,
        TaskId::T4,
        TaskId::T5,
        TaskId::T6,
        TaskId::T7,
    ];
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentProfile {
    pub name: AgentName,
    pub system_instruction: &'static str,
}

const TEST_CODE_REVIEWER: &str = include_str!("../templates/agents/test_code_reviewer.txt");
const SOURCE_CODE_REVIEWER: &str = include_str!("../templates/agents/source_code_reviewer.txt");
const SOFTWARE_ARCHITECT: &str = include_str!("../templates/agents/software_architect.txt");
const SOFTWARE_TEST_ENGINEER: &str = include_str!("../templates/agents/software_test_engineer.txt");

/// Drops leading `#` comment lines and surrounding whitespace.
fn instruction_body(raw: &'static str) -> &'static str {
    let mut rest = raw;
    while rest.starts_with('#') {
        rest = rest.split_once('\n').map_or("", |(_, tail)| tail);
    }
    rest.trim()
}

pub fn profile(name: AgentName) -> AgentProfile {
    let raw = match name {
        AgentName::TestCodeReviewer => TEST_CODE_REVIEWER,
        AgentName::SourceCodeReviewer => SOURCE_CODE_REVIEWER,
        AgentName::SoftwareArchitect => SOFTWARE_ARCHITECT,
        AgentName::SoftwareTestEngineer => SOFTWARE_TEST_ENGINEER,
    };
    AgentProfile {
        name,
        system_instruction: instruction_body(raw),
    }
}

pub fn agent_for(task: TaskId) -> AgentProfile {
    let name = match task {
        TaskId::T1 => AgentName::TestCodeReviewer,
        TaskId::T2 | TaskId::T6 | TaskId::T7 => AgentName::SoftwareTestEngineer,
        TaskId::T3 | TaskId::T5 => AgentName::SoftwareArchitect,
        TaskId::T4 => AgentName::SourceCodeReviewer,
    };
    profile(name)
}
