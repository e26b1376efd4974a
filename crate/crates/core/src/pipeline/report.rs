use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::llm::CostLedger;
use crate::sbfl::MethodId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suspect {
    pub class: String,
    pub sig: String,
    pub reason: String,
}

impl Suspect {
    pub fn id(&self) -> MethodId {
        MethodId::new(&self.class, &self.sig)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodReason {
    pub sig: String,
    pub reason: String,
}

/// Outcome of one failed-test-class run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_class: Option<String>,
    pub suspicious_class: Option<String>,
    pub suspicious_methods: Vec<MethodReason>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportCost {
    pub tokens: u64,
    pub dollars: f64,
    pub seconds: f64,
}

impl ReportCost {
    pub fn from_ledger(ledger: &CostLedger, price_per_1k: f64) -> Self {
        Self {
            tokens: ledger.total_tokens(),
            dollars: ledger.dollars(price_per_1k),
            seconds: ledger.wall_seconds,
        }
    }
}

/// Final output for one bug.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub bug_id: String,
    pub top1: Option<Suspect>,
    pub per_class: Vec<ClassReport>,
    /// Top-1 first, then the remaining suspects in discovery order.
    pub ranked: Vec<MethodId>,
    pub cost: ReportCost,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(skip)]
    pub ledger: CostLedger,
}

impl LocalizationReport {
    pub fn to_json(&self) -> String {
        let mut json = serde_json::to_string_pretty(self).expect("report serializes");
        json.push('\n');
        json
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// `[top1] ++ (suspects without top1)`, duplicate-free.
pub fn final_ranking(top1: Option<&MethodId>, chronological: &[MethodId]) -> Vec<MethodId> {
    let mut ranked: Vec<MethodId> = top1.cloned().into_iter().collect();
    for m in chronological {
        if !ranked.contains(m) {
            ranked.push(m.clone());
        }
    }
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top1_is_promoted() {
        let m1 = MethodId::new("A", "m1()");
        let m2 = MethodId::new("A", "m2()");
        assert_eq!(
            final_ranking(Some(&m2), &[m1.clone(), m2.clone()]),
            vec![m2.clone(), m1.clone()]
        );
        assert_eq!(final_ranking(None, &[m1.clone(), m1.clone()]), vec![m1]);
        assert!(final_ranking(None, &[]).is_empty());
    }

    #[test]
    fn json_shape() {
        let report = LocalizationReport {
            bug_id: "b".into(),
            top1: None,
            per_class: vec![],
            ranked: vec![],
            cost: ReportCost {
                tokens: 0,
                dollars: 0.0,
                seconds: 0.0,
            },
            flags: vec![],
            ledger: CostLedger::default(),
        };
        let value: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert!(value["top1"].is_null());
        assert_eq!(value["cost"]["tokens"], 0);
        assert_eq!(LocalizationReport::from_json(&report.to_json()).unwrap(), report);
    }
}
