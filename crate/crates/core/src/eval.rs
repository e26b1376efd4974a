//! Top-N scoring against known buggy methods, and cost statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pipeline::report::{LocalizationReport, ReportCost};
use crate::sbfl::MethodId;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no ground truth for bug {0}")]
    MissingTruth(String),
    #[error("bug {bug_id}: {method} appears more than once in the ranked list")]
    DuplicateRanked { bug_id: String, method: MethodId },
    #[error("bug {0} has more than one report")]
    DuplicateReport(String),
    #[error("no reports to summarize")]
    EmptyInput,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Schema { path: PathBuf, reason: String },
}

/// Buggy methods per bug.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub bugs: BTreeMap<String, BTreeSet<MethodId>>,
}

impl GroundTruth {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let truth: GroundTruth = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if let Some((bug, _)) = truth.bugs.iter().find(|(_, m)| m.is_empty()) {
            return Err(format!("bug {bug} lists no buggy methods"));
        }
        Ok(truth)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|reason| EvalError::Schema {
            path: path.to_path_buf(),
            reason,
        })
    }
}

/// True iff a buggy method is among the first `n` ranked methods.
pub fn top_n(ranked: &[MethodId], truth: &BTreeSet<MethodId>, n: usize) -> bool {
    ranked.iter().take(n).any(|m| truth.contains(m))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hits {
    pub top1: bool,
    pub top3: bool,
    pub top5: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub bugs: usize,
    pub top1: usize,
    pub top3: usize,
    pub top5: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopNResult {
    pub per_bug: BTreeMap<String, Hits>,
    pub totals: Totals,
}

pub fn hits(ranked: &[MethodId], truth: &BTreeSet<MethodId>) -> Hits {
    Hits {
        top1: top_n(ranked, truth, 1),
        top3: top_n(ranked, truth, 3),
        top5: top_n(ranked, truth, 5),
    }
}

/// Scores every report. Ranked lists must be duplicate-free.
pub fn aggregate(reports: &[LocalizationReport], truth: &GroundTruth) -> Result<TopNResult, EvalError> {
    let mut result = TopNResult::default();
    for report in reports {
        let buggy = truth
            .bugs
            .get(&report.bug_id)
            .ok_or_else(|| EvalError::MissingTruth(report.bug_id.clone()))?;
        let mut seen = BTreeSet::new();
        for m in &report.ranked {
            if !seen.insert(m) {
                return Err(EvalError::DuplicateRanked {
                    bug_id: report.bug_id.clone(),
                    method: m.clone(),
                });
            }
        }
        let h = hits(&report.ranked, buggy);
        if result.per_bug.insert(report.bug_id.clone(), h).is_some() {
            return Err(EvalError::DuplicateReport(report.bug_id.clone()));
        }
        result.totals.bugs += 1;
        result.totals.top1 += usize::from(h.top1);
        result.totals.top3 += usize::from(h.top3);
        result.totals.top5 += usize::from(h.top5);
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub bugs: usize,
    pub mean_dollars: f64,
    pub mean_seconds: f64,
    pub p95_dollars: f64,
    pub p95_seconds: f64,
    pub mean_tokens: f64,
}

/// Nearest-rank percentile: the smallest value with at least `p` percent of
/// the sample at or below it.
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn summarize_costs(costs: &[ReportCost]) -> Result<CostSummary, EvalError> {
    if costs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let dollars: Vec<f64> = costs.iter().map(|c| c.dollars).collect();
    let seconds: Vec<f64> = costs.iter().map(|c| c.seconds).collect();
    let tokens: Vec<f64> = costs.iter().map(|c| c.tokens as f64).collect();
    Ok(CostSummary {
        bugs: costs.len(),
        mean_dollars: mean(&dollars),
        mean_seconds: mean(&seconds),
        p95_dollars: nearest_rank(&dollars, 95.0).expect("non-empty"),
        p95_seconds: nearest_rank(&seconds, 95.0).expect("non-empty"),
        mean_tokens: mean(&tokens),
    })
}

pub fn cost_summary(reports: &[LocalizationReport]) -> Result<CostSummary, EvalError> {
    let costs: Vec<ReportCost> = reports.iter().map(|r| r.cost).collect();
    summarize_costs(&costs)
}

/// Tokens that cost `dollars` at `price_per_1k`.
pub fn tokens_for_dollars(dollars: f64, price_per_1k: f64) -> f64 {
    dollars / price_per_1k * 1000.0
}

/// Loads every `*.json` report in `dir`, sorted by file name.
pub fn load_reports(dir: &Path) -> Result<Vec<LocalizationReport>, EvalError> {
    let io = |source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            LocalizationReport::load(p).map_err(|e| EvalError::Schema {
                path: p.clone(),
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Markdown table of the totals and, when given, cost statistics.
pub fn markdown_table(result: &TopNResult, cost: Option<&CostSummary>) -> String {
    let t = result.totals;
    let mut out = String::from("| Bugs | Top-1 | Top-3 | Top-5 |\n|---:|---:|---:|---:|\n");
    let _ = writeln!(out, "| {} | {} | {} | {} |", t.bugs, t.top1, t.top3, t.top5);
    if let Some(c) = cost {
        out.push_str("\n| Cost | Mean | P95 |\n|---|---:|---:|\n");
        let _ = writeln!(out, "| Dollars | {:.4} | {:.4} |", c.mean_dollars, c.p95_dollars);
        let _ = writeln!(out, "| Seconds | {:.1} | {:.1} |", c.mean_seconds, c.p95_seconds);
    }
    out
}
