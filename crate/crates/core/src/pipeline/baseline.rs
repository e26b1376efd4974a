//! Ochiai ranking re-ranked by single-method reviews.

use super::input::{BugInput, FailedTest, PreparedClass};
use super::parse::parse_verdict;
use super::prompts;
use super::report::{ClassReport, LocalizationReport, MethodReason, ReportCost, Suspect};
use super::tasks::{TaskContext, REASK_VERDICT};
use super::{BugRun, PipelineSettings};
use crate::agents::TaskId;
use crate::index::lookup_method;
use crate::llm::{ChatBackend, GatewayError};
use crate::sbfl::{rank, top_k, MethodId, SbflError, SpectrumSet};

/// Run label for baseline transcripts.
pub const RERANK_RUN: &str = "rerank";

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error(transparent)]
    Sbfl(#[from] SbflError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Failed tests shown in every review: the first `max_failed_tests` across
/// all failed test classes, outputs truncated.
fn review_tests(input: &BugInput, settings: &PipelineSettings) -> Vec<FailedTest> {
    let limits = settings.limits;
    input
        .failed_test_classes
        .iter()
        .flat_map(|c| PreparedClass::new(c, limits.max_failed_tests, limits.output_tokens).tests)
        .take(limits.max_failed_tests)
        .collect()
}

/// Reviews the top `rerank_k` Ochiai methods. Methods judged buggy move to
/// the front in Ochiai order; everything else keeps its Ochiai position.
pub fn run_sbfl_rerank_baseline(
    input: &BugInput,
    spectra: &SpectrumSet,
    settings: &PipelineSettings,
    backend: &dyn ChatBackend,
) -> Result<BugRun, BaselineError> {
    let ranked = rank(spectra)?;
    let tests = review_tests(input, settings);
    let mut ctx = TaskContext::new(backend, settings);
    let mut buggy: Vec<Suspect> = Vec::new();
    let mut flags = Vec::new();

    for (i, entry) in top_k(&ranked, settings.limits.rerank_k).iter().enumerate() {
        let MethodId { class, sig } = &entry.method;
        let code = lookup_method(&input.index, class, sig).map_or("", |m| m.code.as_str());
        let prompt = prompts::rerank_review(&tests, class, sig, code);
        let answer = ctx.ask(
            RERANK_RUN,
            TaskId::T6,
            Some(i + 1),
            prompt,
            1,
            REASK_VERDICT,
            parse_verdict,
        )?;
        match answer.value {
            Some(v) if v.buggy => buggy.push(Suspect {
                class: class.clone(),
                sig: sig.clone(),
                reason: v.reason.unwrap_or_default(),
            }),
            Some(_) => {}
            None => flags.push(format!("unparseable verdict for {} treated as FALSE", entry.method)),
        }
    }

    let mut order: Vec<MethodId> = buggy.iter().map(Suspect::id).collect();
    order.extend(
        ranked
            .iter()
            .map(|r| r.method.clone())
            .filter(|m| !buggy.iter().any(|b| b.id() == *m)),
    );

    let mut per_class: Vec<ClassReport> = Vec::new();
    for s in &buggy {
        let method = MethodReason {
            sig: s.sig.clone(),
            reason: s.reason.clone(),
        };
        match per_class
            .iter_mut()
            .find(|c| c.suspicious_class.as_deref() == Some(&s.class))
        {
            Some(c) => c.suspicious_methods.push(method),
            None => per_class.push(ClassReport {
                test_class: None,
                suspicious_class: Some(s.class.clone()),
                suspicious_methods: vec![method],
                flags: Vec::new(),
                error: None,
            }),
        }
    }

    let report = LocalizationReport {
        bug_id: input.bug_id.clone(),
        top1: buggy.first().cloned(),
        per_class,
        ranked: order,
        cost: ReportCost::from_ledger(&ctx.ledger, settings.price_per_1k),
        flags,
        ledger: ctx.ledger,
    };
    Ok(BugRun { report, log: ctx.log })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::index::CodebaseIndex;
    use crate::llm::ScriptedBackend;
    use crate::pipeline::input::{FailedTestClass, Failures};
    use crate::sbfl::Spectrum;
    use crate::trace::ScopedCoverage;

    fn input() -> BugInput {
        let failures = Failures {
            bug_id: "b1".into(),
            classes: vec![FailedTestClass {
                class_fqn: "p.T".into(),
                failed_tests: vec![FailedTest {
                    id: "p.T::t".into(),
                    code: "assert".into(),
                    stack: "at p.A".into(),
                    output: "boom".into(),
                }],
            }],
        };
        BugInput::new(
            failures,
            Arc::new(CodebaseIndex::default()),
            Arc::new(ScopedCoverage::default()),
        )
    }

    fn spectra(n: u64) -> SpectrumSet {
        SpectrumSet {
            total_failed: 1,
            spectra: (0..n)
                .map(|i| Spectrum {
                    method: MethodId::new("p.A", format!("m{i:02}()")),
                    failed_cover: 1,
                    passed_cover: i,
                })
                .collect(),
        }
    }

    #[test]
    fn promotes_buggy_methods() {
        let backend = ScriptedBackend::constant("FALSE").rule(["m02()"], &["TRUE. off by one"]);
        let run = run_sbfl_rerank_baseline(&input(), &spectra(5), &PipelineSettings::default(), &backend).unwrap();
        assert_eq!(run.report.ranked[0], MethodId::new("p.A", "m02()"));
        assert_eq!(run.report.ranked.len(), 5);
        assert_eq!(run.report.top1.unwrap().reason, "off by one");
        assert_eq!(run.log.entries.len(), 5);
    }

    #[test]
    fn reviews_at_most_k() {
        let backend = ScriptedBackend::constant("FALSE");
        let set = spectra(30);
        let run = run_sbfl_rerank_baseline(&input(), &set, &PipelineSettings::default(), &backend).unwrap();
        assert_eq!(run.log.entries.len(), 20);
        let ochiai: Vec<MethodId> = rank(&set).unwrap().into_iter().map(|r| r.method).collect();
        assert_eq!(run.report.ranked, ochiai);
        assert!(run.report.top1.is_none());
    }
}
