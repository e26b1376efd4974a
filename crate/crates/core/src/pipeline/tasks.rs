//! The seven tasks. Each one generates its prompt from the run state and
//! analysis results, asks the bound agent, parses the answer and stores it.

use indexmap::IndexMap;

use super::input::{BugInput, PreparedClass};
use super::parse::{parse_doc_lines, parse_method_list, parse_numbered_list, parse_verdict, resolve};
use super::prompts::{self, SuspectLine};
use super::report::Suspect;
use super::runlog::{RunLog, TaskTranscript, BUG_RUN};
use super::state::{Review, RunState, SlotWritten};
use super::PipelineSettings;
use crate::agents::{agent_for, TaskId};
use crate::index::{method_name, simple_name};
use crate::llm::{complete, ChatBackend, ChatMessage, ChatTranscript, CostLedger, GatewayError, TokenUsage};
use crate::trace::{
    augment, class_intersection, class_union, coverage_rates, reduce_top_n, CoveredClass, ExtractedClass,
    ExtractedClasses, ScopedCoverage,
};

pub const REASK_LIST: &str =
    "Your answer could not be read as a numbered list. Please answer again with one possible cause per line, each starting with its number, like \"1. ...\".";
pub const REASK_CLASS: &str =
    "Your answer did not name a class from the table. Please answer with exactly one fully qualified class name copied from the table.";
pub const REASK_DOCS: &str =
    "Your answer could not be matched to the listed methods. Please answer with one line per method in the form \"signature: comment\", copying each signature exactly.";
pub const REASK_METHODS: &str =
    "None of the listed methods could be matched. Please list the related method signatures exactly as written in the table, one per line, or answer NONE.";
pub const REASK_VERDICT: &str =
    "Please start your answer with TRUE (followed by the reason) if the method is buggy, or answer only FALSE.";
pub const REASK_TOP1: &str =
    "Your answer did not match a method from the list. Please answer with the full name of exactly one method from the list.";

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{task}: answer could not be parsed after retries: {response:?}")]
    Parse { task: TaskId, response: String },
    #[error("T3: answer {answer:?} does not name a class from the table")]
    ClassResolution { answer: String },
    #[error("no source classes covered by the failed tests of {0}")]
    NoCoverage(String),
    #[error(transparent)]
    State(#[from] SlotWritten),
}

pub(crate) struct Answer<T> {
    pub(crate) value: Option<T>,
    pub(crate) response: String,
}

/// Backend access plus the accounting of one bug's exchanges.
pub struct TaskContext<'a> {
    backend: &'a dyn ChatBackend,
    pub settings: &'a PipelineSettings,
    pub ledger: CostLedger,
    pub log: RunLog,
}

impl<'a> TaskContext<'a> {
    pub fn new(backend: &'a dyn ChatBackend, settings: &'a PipelineSettings) -> Self {
        Self {
            backend,
            settings,
            ledger: CostLedger::default(),
            log: RunLog::default(),
        }
    }

    /// Ledger key for a task within a run.
    pub fn ledger_key(run: &str, task: TaskId) -> String {
        if run == BUG_RUN {
            task.to_string()
        } else {
            format!("{run}/{task}")
        }
    }

    /// One fresh conversation: system instruction, prompt, then up to
    /// `reasks` clarifying turns while the answer does not parse.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn ask<T>(
        &mut self,
        run: &str,
        task: TaskId,
        item: Option<usize>,
        prompt: String,
        reasks: usize,
        reask: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<Answer<T>, GatewayError> {
        let agent = agent_for(task);
        let mut transcript = ChatTranscript::new(agent.system_instruction, prompt);
        let mut usage = TokenUsage::default();
        let key = Self::ledger_key(run, task);
        let mut attempt = 0;
        let outcome = loop {
            let completion = match complete(self.backend, &transcript, &self.settings.params) {
                Ok(c) => c,
                Err(e) => break Err(e),
            };
            usage += completion.usage;
            self.ledger.add(&key, completion.usage, completion.latency_secs);
            let response = completion.message.content.clone();
            transcript.push(completion.message);
            if let Some(value) = parse(&response) {
                break Ok(Answer {
                    value: Some(value),
                    response,
                });
            }
            if attempt >= reasks {
                break Ok(Answer { value: None, response });
            }
            attempt += 1;
            transcript.push(ChatMessage::user(reask));
        };
        self.log.push(TaskTranscript {
            run: run.to_string(),
            task,
            item,
            agent: agent.name,
            messages: transcript.messages,
            usage,
        });
        outcome
    }
}

/// T1: summarize what the failed tests do, with the common test utility
/// code in view.
pub fn task1_test_behavior(
    ctx: &mut TaskContext<'_>,
    state: &mut RunState,
    prep: &PreparedClass,
    utility: &ExtractedClasses,
) -> Result<(), TaskError> {
    let prompt = prompts::test_behavior(prep, utility, &ctx.settings.limits);
    let answer = ctx.ask(&prep.class_fqn, TaskId::T1, None, prompt, 0, "", |t| {
        Some(t.to_string())
    })?;
    state.set_test_behavior(answer.response)?;
    Ok(())
}

/// T2: list possible causes of the failure.
pub fn task2_failure_analysis(
    ctx: &mut TaskContext<'_>,
    state: &mut RunState,
    prep: &PreparedClass,
) -> Result<(), TaskError> {
    let prompt = prompts::failure_analysis(prep, state.test_behavior());
    let reasks = ctx.settings.reasks;
    let answer = ctx.ask(
        &prep.class_fqn,
        TaskId::T2,
        None,
        prompt,
        reasks,
        REASK_LIST,
        parse_numbered_list,
    )?;
    match answer.value {
        Some(causes) => Ok(state.set_possible_causes(causes)?),
        None => Err(TaskError::Parse {
            task: TaskId::T2,
            response: answer.response,
        }),
    }
}

/// T3: pick the suspicious class from a `(FQN, doc)` table.
pub fn task3_search_class(
    ctx: &mut TaskContext<'_>,
    state: &mut RunState,
    prep: &PreparedClass,
    table: &[(String, String)],
) -> Result<(), TaskError> {
    let prompt = prompts::search_class(prep, state.possible_causes(), table, &ctx.settings.limits);
    let candidates: Vec<String> = table.iter().map(|(fqn, _)| fqn.clone()).collect();
    let reasks = ctx.settings.reasks;
    let answer = ctx.ask(&prep.class_fqn, TaskId::T3, None, prompt, reasks, REASK_CLASS, |t| {
        resolve(t, &candidates, simple_name)
    })?;
    match answer.value {
        Some(i) => Ok(state.set_suspicious_class(candidates[i].clone())?),
        None => Err(TaskError::ClassResolution {
            answer: answer.response,
        }),
    }
}

/// T4: rewrite the comments of the covered methods of the suspicious class.
/// Returns flags describing any degradation.
pub fn task4_doc_enhancement(
    ctx: &mut TaskContext<'_>,
    state: &mut RunState,
    run: &str,
    class: &ExtractedClass,
    enabled: bool,
) -> Result<Vec<String>, TaskError> {
    let original: IndexMap<String, String> = class
        .methods
        .iter()
        .map(|m| (m.signature.clone(), m.doc.clone()))
        .collect();
    if !enabled {
        state.set_enhanced_docs(original)?;
        return Ok(Vec::new());
    }
    let signatures: Vec<String> = original.keys().cloned().collect();
    let prompt = prompts::doc_enhancement(class, &ctx.settings.limits);
    let reasks = ctx.settings.reasks;
    let answer = ctx.ask(run, TaskId::T4, None, prompt, reasks, REASK_DOCS, |t| {
        parse_doc_lines(t, &signatures)
    })?;
    let mut flags = Vec::new();
    let docs = match answer.value {
        Some(new_docs) => {
            let missing = signatures.iter().filter(|s| !new_docs.contains_key(*s)).count();
            if missing > 0 {
                flags.push(format!("T4: {missing} methods kept their original comment"));
            }
            original
                .into_iter()
                .map(|(sig, doc)| {
                    let doc = new_docs.get(&sig).cloned().unwrap_or(doc);
                    (sig, doc)
                })
                .collect()
        }
        None => {
            flags.push("T4: unparseable answer, using original comments".to_string());
            original
        }
    };
    state.set_enhanced_docs(docs)?;
    Ok(flags)
}

/// T5: choose the methods that may relate to the bug.
pub fn task5_related_methods(
    ctx: &mut TaskContext<'_>,
    state: &mut RunState,
    prep: &PreparedClass,
    class: &ExtractedClass,
) -> Result<Vec<String>, TaskError> {
    let empty = IndexMap::new();
    let docs = state.enhanced_docs().unwrap_or(&empty);
    let prompt = prompts::related_methods(prep, state.possible_causes(), class, docs, &ctx.settings.limits);
    let signatures: Vec<String> = class.methods.iter().map(|m| m.signature.clone()).collect();
    let reasks = ctx.settings.reasks;
    let answer = ctx.ask(&prep.class_fqn, TaskId::T5, None, prompt, reasks, REASK_METHODS, |t| {
        parse_method_list(t, &signatures)
    })?;
    let mut flags = Vec::new();
    let methods = match answer.value {
        Some(list) => {
            for unknown in &list.unresolved {
                tracing::warn!(run = %prep.class_fqn, item = %unknown, "T5 listed an unknown method");
                flags.push(format!("T5: dropped unknown method {unknown:?}"));
            }
            list.methods
        }
        None => {
            flags.push("T5: unparseable answer, no related methods".to_string());
            Vec::new()
        }
    };
    state.set_related_methods(methods)?;
    Ok(flags)
}

/// T6: review one method in its own conversation.
pub fn task6_method_review(
    ctx: &mut TaskContext<'_>,
    state: &mut RunState,
    prep: &PreparedClass,
    class: &ExtractedClass,
    signature: &str,
    item: usize,
) -> Result<(), TaskError> {
    let method = class
        .methods
        .iter()
        .find(|m| m.signature == signature)
        .expect("reviewed method comes from the covered methods");
    let doc = state
        .enhanced_docs()
        .and_then(|d| d.get(signature))
        .map_or(method.doc.as_str(), String::as_str);
    let prompt = prompts::method_review(prep, state.possible_causes(), class, method, doc, &ctx.settings.limits);
    let answer = ctx.ask(
        &prep.class_fqn,
        TaskId::T6,
        Some(item),
        prompt,
        1,
        REASK_VERDICT,
        parse_verdict,
    )?;
    let review = match answer.value {
        Some(v) => Review {
            signature: signature.to_string(),
            verdict: v.buggy,
            reason: v.reason,
            flagged: false,
        },
        None => Review {
            signature: signature.to_string(),
            verdict: false,
            reason: None,
            flagged: true,
        },
    };
    state.push_review(review);
    Ok(())
}

/// Result of the top-1 selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Top1 {
    pub choice: Option<Suspect>,
    pub flag: Option<String>,
}

/// T7: choose one method among all suspects. No model call for fewer than
/// two suspects.
pub fn task7_top1(
    ctx: &mut TaskContext<'_>,
    test_classes: &[String],
    suspects: &[Suspect],
) -> Result<Top1, GatewayError> {
    match suspects {
        [] => {
            return Ok(Top1 {
                choice: None,
                flag: None,
            })
        }
        [only] => {
            return Ok(Top1 {
                choice: Some(only.clone()),
                flag: None,
            })
        }
        _ => {}
    }
    let lines: Vec<SuspectLine<'_>> = suspects
        .iter()
        .map(|s| SuspectLine {
            class: &s.class,
            signature: &s.sig,
            reason: &s.reason,
        })
        .collect();
    let prompt = prompts::top1(test_classes, &lines);
    let full_names: Vec<String> = suspects
        .iter()
        .map(|s| prompts::method_full_name(&s.class, &s.sig))
        .collect();
    let reasks = ctx.settings.reasks;
    let answer = ctx.ask(BUG_RUN, TaskId::T7, None, prompt, reasks, REASK_TOP1, |t| {
        resolve(t, &full_names, full_name_short)
    })?;
    Ok(match answer.value {
        Some(i) => Top1 {
            choice: Some(suspects[i].clone()),
            flag: None,
        },
        None => Top1 {
            choice: Some(suspects[0].clone()),
            flag: Some("T7: answer did not match a suspect; using the first one".to_string()),
        },
    })
}

/// Method name of a `class.sig` full name.
fn full_name_short(full: &str) -> &str {
    let sig_start = full.find('(').map_or(0, |p| full[..p].rfind('.').map_or(0, |d| d + 1));
    method_name(&full[sig_start..])
}

/// State and diagnostics of one failed-test-class run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassOutcome {
    pub test_class: String,
    pub state: RunState,
    pub flags: Vec<String>,
    pub error: Option<String>,
}

/// Test utility code: test-scope methods common to the failed tests,
/// excluding the failed test methods themselves.
pub fn test_utility(
    coverage: &ScopedCoverage,
    prep: &PreparedClass,
    input: &BugInput,
    flags: &mut Vec<String>,
) -> ExtractedClasses {
    let view = &coverage.test;
    if view.is_empty() {
        return ExtractedClasses::default();
    }
    let mut common = class_intersection(view).unwrap_or_default();
    if common.is_empty() {
        flags.push("test-scope class intersection empty; using union".into());
        common = class_union(view);
    }
    for class in &mut common {
        class.signatures.retain(|sig| {
            !prep
                .tests
                .iter()
                .any(|t| t.id.starts_with(&format!("{}::", class.fqn)) && method_name(sig) == t.method())
        });
    }
    common.retain(|c| !c.signatures.is_empty());
    augment(&common, &input.index)
}

/// Classes offered to T3, reduced to the top classes by method coverage.
/// Rows are `(FQN, doc)`. The second value holds every covered source class
/// with the union of its covered signatures.
pub fn candidate_classes(
    coverage: &ScopedCoverage,
    input: &BugInput,
    top_classes: usize,
    flags: &mut Vec<String>,
) -> (Vec<(String, String)>, Vec<CoveredClass>) {
    let view = &coverage.source;
    let union = class_union(view);
    let mut chosen = class_intersection(view).unwrap_or_default();
    if chosen.is_empty() && !union.is_empty() {
        flags.push("source-scope class intersection empty; using union".into());
        chosen = union.clone();
    }
    let with_union_sigs: Vec<CoveredClass> = chosen
        .iter()
        .filter_map(|c| union.iter().find(|u| u.fqn == c.fqn).cloned())
        .collect();
    let rates = coverage_rates(&with_union_sigs, &input.index);
    let table = reduce_top_n(&rates, top_classes)
        .into_iter()
        .map(|fqn| {
            let doc = input.index.class(&fqn).map(|c| c.doc.clone()).unwrap_or_default();
            (fqn, doc)
        })
        .collect();
    (table, union)
}

fn run_tasks(
    ctx: &mut TaskContext<'_>,
    input: &BugInput,
    prep: &PreparedClass,
    state: &mut RunState,
    flags: &mut Vec<String>,
) -> Result<(), TaskError> {
    let ablation = ctx.settings.ablation.normalized();
    let limits = ctx.settings.limits;
    let ids = prep.test_ids();
    let coverage = input.coverage.restrict(&ids);

    let (table, union) = candidate_classes(&coverage, input, limits.top_classes, flags);
    if table.is_empty() {
        return Err(TaskError::NoCoverage(prep.class_fqn.clone()));
    }

    if ablation.enable_t1 {
        let utility = test_utility(&coverage, prep, input, flags);
        if utility.flag_count() > 0 {
            flags.push(format!(
                "{} test utility entries missing from the index",
                utility.flag_count()
            ));
        }
        task1_test_behavior(ctx, state, prep, &utility)?;
    }
    if ablation.enable_t2 {
        task2_failure_analysis(ctx, state, prep)?;
    }
    task3_search_class(ctx, state, prep, &table)?;

    let suspicious = state.suspicious_class().expect("set by T3").to_string();
    let covered: Vec<CoveredClass> = union.into_iter().filter(|c| c.fqn == suspicious).collect();
    let extracted = augment(&covered, &input.index)
        .classes
        .pop()
        .expect("suspicious class comes from the covered classes");
    let missing = extracted.methods.iter().filter(|m| !m.in_index).count();
    if missing > 0 {
        flags.push(format!(
            "{missing} covered methods of {suspicious} missing from the index"
        ));
    }

    flags.extend(task4_doc_enhancement(
        ctx,
        state,
        &prep.class_fqn,
        &extracted,
        ablation.enable_t4,
    )?);
    flags.extend(task5_related_methods(ctx, state, prep, &extracted)?);
    let related = state.related_methods().unwrap_or_default().to_vec();
    for (i, sig) in related.iter().enumerate() {
        task6_method_review(ctx, state, prep, &extracted, sig, i + 1)?;
    }
    let flagged = state.reviews().iter().filter(|r| r.flagged).count();
    if flagged > 0 {
        flags.push(format!("T6: {flagged} unparseable verdicts treated as FALSE"));
    }
    Ok(())
}

/// Runs T1–T6 for one failed test class. Task failures end the run and are
/// recorded in the outcome; backend failures are returned as errors.
pub fn run_class(
    ctx: &mut TaskContext<'_>,
    input: &BugInput,
    class: &super::input::FailedTestClass,
) -> Result<ClassOutcome, GatewayError> {
    let limits = ctx.settings.limits;
    let prep = PreparedClass::new(class, limits.max_failed_tests, limits.output_tokens);
    let mut state = RunState::default();
    let mut flags = Vec::new();
    if prep.dropped_tests > 0 {
        flags.push(format!(
            "kept {} of {} failed tests",
            prep.tests.len(),
            prep.tests.len() + prep.dropped_tests
        ));
    }
    let error = match run_tasks(ctx, input, &prep, &mut state, &mut flags) {
        Ok(()) => None,
        Err(TaskError::Gateway(e)) => return Err(e),
        Err(e) => {
            tracing::warn!(run = %prep.class_fqn, error = %e, "test class run aborted");
            Some(e.to_string())
        }
    };
    Ok(ClassOutcome {
        test_class: prep.class_fqn,
        state,
        flags,
        error,
    })
}
