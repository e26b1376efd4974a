//! The staged localization procedure.
//!
//! A bug is processed one failed test class at a time. Each class run walks
//! T1 to T6 in order against its own [`state::RunState`]; T7 then picks one
//! method among everything the runs flagged as buggy.

pub mod baseline;
pub mod input;
pub mod parse;
pub mod prompts;
pub mod report;
pub mod runlog;
pub mod state;
pub mod tasks;
pub mod template;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::llm::{ChatBackend, CompletionParams, GatewayError, DEFAULT_PRICE_PER_1K};
use input::BugInput;
use report::{final_ranking, ClassReport, LocalizationReport, MethodReason, ReportCost, Suspect};
use runlog::RunLog;
use tasks::{run_class, task7_top1, TaskContext};

/// Prompt size limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub doc_tokens: usize,
    pub output_tokens: usize,
    pub max_failed_tests: usize,
    pub top_classes: usize,
    pub rerank_k: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            doc_tokens: 100,
            output_tokens: 200,
            max_failed_tests: 5,
            top_classes: 50,
            rerank_k: 20,
        }
    }
}

/// Which optional tasks run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub enable_t1: bool,
    pub enable_t2: bool,
    pub enable_t4: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            enable_t1: true,
            enable_t2: true,
            enable_t4: true,
        }
    }
}

impl AblationConfig {
    /// T1 only feeds T2, so disabling T2 disables T1 too.
    pub fn normalized(self) -> Self {
        Self {
            enable_t1: self.enable_t1 && self.enable_t2,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSettings {
    pub limits: Limits,
    pub ablation: AblationConfig,
    pub params: CompletionParams,
    pub price_per_1k: f64,
    /// Clarifying re-asks after an unparseable answer (T6 always gets one).
    pub reasks: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            limits: Limits::default(),
            ablation: AblationConfig::default(),
            params: CompletionParams::default(),
            price_per_1k: DEFAULT_PRICE_PER_1K,
            reasks: 2,
        }
    }
}

/// Report plus every transcript behind it.
#[derive(Debug, Clone)]
pub struct BugRun {
    pub report: LocalizationReport,
    pub log: RunLog,
}

/// Localizes one bug. Class runs execute in input order; a task failure
/// ends only its class run, while backend failures end the whole bug.
pub fn run_bug(
    input: &BugInput,
    settings: &PipelineSettings,
    backend: &dyn ChatBackend,
) -> Result<BugRun, GatewayError> {
    let mut ctx = TaskContext::new(backend, settings);
    let mut per_class = Vec::new();
    let mut suspects: Vec<Suspect> = Vec::new();
    let mut flags = Vec::new();

    for class in &input.failed_test_classes {
        let outcome = run_class(&mut ctx, input, class)?;
        let suspicious_class = outcome.state.suspicious_class().map(str::to_string);
        let mut methods = Vec::new();
        for review in outcome.state.reviews().iter().filter(|r| r.verdict) {
            let reason = review.reason.clone().unwrap_or_default();
            let class_fqn = suspicious_class.clone().expect("reviews follow T3");
            let suspect = Suspect {
                class: class_fqn,
                sig: review.signature.clone(),
                reason: reason.clone(),
            };
            if !suspects.iter().any(|s| s.id() == suspect.id()) {
                suspects.push(suspect);
            }
            methods.push(MethodReason {
                sig: review.signature.clone(),
                reason,
            });
        }
        per_class.push(ClassReport {
            test_class: Some(outcome.test_class),
            suspicious_class,
            suspicious_methods: methods,
            flags: outcome.flags,
            error: outcome.error,
        });
    }

    let test_classes: Vec<String> = input.failed_test_classes.iter().map(|c| c.class_fqn.clone()).collect();
    let top1 = task7_top1(&mut ctx, &test_classes, &suspects)?;
    flags.extend(top1.flag);
    let chronological: Vec<_> = suspects.iter().map(Suspect::id).collect();
    let ranked = final_ranking(top1.choice.as_ref().map(Suspect::id).as_ref(), &chronological);

    let report = LocalizationReport {
        bug_id: input.bug_id.clone(),
        top1: top1.choice,
        per_class,
        ranked,
        cost: ReportCost::from_ledger(&ctx.ledger, settings.price_per_1k),
        flags,
        ledger: ctx.ledger,
    };
    Ok(BugRun { report, log: ctx.log })
}

/// Runs `f` over `items` on a pool of `jobs` threads, keeping input order.
pub fn run_parallel<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
        .install(|| items.par_iter().map(f).collect())
}

/// Localizes several bugs with up to `jobs` running at once. Results keep
/// input order.
pub fn run_many(
    inputs: &[BugInput],
    settings: &PipelineSettings,
    backend: &dyn ChatBackend,
    jobs: usize,
) -> Vec<Result<BugRun, GatewayError>> {
    run_parallel(inputs, jobs, |input| run_bug(input, settings, backend))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let l = Limits::default();
        assert_eq!(
            (
                l.doc_tokens,
                l.output_tokens,
                l.max_failed_tests,
                l.top_classes,
                l.rerank_k
            ),
            (100, 200, 5, 50, 20)
        );
        let s = PipelineSettings::default();
        assert_eq!(s.price_per_1k, 0.003);
        assert_eq!(s.params.temperature, 0.0);
        assert_eq!(s.params.max_tokens, 1024);
    }

    #[test]
    fn disabling_t2_mutes_t1() {
        let a = AblationConfig {
            enable_t2: false,
            ..Default::default()
        };
        assert!(!a.normalized().enable_t1);
        let b = AblationConfig {
            enable_t1: false,
            ..Default::default()
        };
        assert!(b.normalized().enable_t2);
    }
}
