//! Prompt generation for every task. Builders are pure functions of the
//! material they are given, which keeps each task's inputs explicit.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use indexmap::IndexMap;

use super::input::{FailedTest, PreparedClass};
use super::template::PromptTemplate;
use super::Limits;
use crate::tokens::truncate_to_tokens;
use crate::trace::{ExtractedClass, ExtractedClasses, ExtractedMethod};

/// Fills the causes field of the method review when failure analysis was
/// skipped.
pub const NO_CAUSES: &str = "(not available)";

struct Templates {
    t1: PromptTemplate,
    t2: PromptTemplate,
    t3: PromptTemplate,
    t4: PromptTemplate,
    t5: PromptTemplate,
    t6: PromptTemplate,
    t7: PromptTemplate,
    rerank: PromptTemplate,
}

fn templates() -> &'static Templates {
    static TEMPLATES: OnceLock<Templates> = OnceLock::new();
    TEMPLATES.get_or_init(|| Templates {
        t1: PromptTemplate::parse(
            "t1_test_behavior",
            include_str!("../../templates/prompts/t1_test_behavior.txt"),
        ),
        t2: PromptTemplate::parse(
            "t2_failure_analysis",
            include_str!("../../templates/prompts/t2_failure_analysis.txt"),
        ),
        t3: PromptTemplate::parse(
            "t3_search_class",
            include_str!("../../templates/prompts/t3_search_class.txt"),
        ),
        t4: PromptTemplate::parse(
            "t4_doc_enhancement",
            include_str!("../../templates/prompts/t4_doc_enhancement.txt"),
        ),
        t5: PromptTemplate::parse(
            "t5_related_methods",
            include_str!("../../templates/prompts/t5_related_methods.txt"),
        ),
        t6: PromptTemplate::parse(
            "t6_method_review",
            include_str!("../../templates/prompts/t6_method_review.txt"),
        ),
        t7: PromptTemplate::parse("t7_top1", include_str!("../../templates/prompts/t7_top1.txt")),
        rerank: PromptTemplate::parse(
            "rerank_review",
            include_str!("../../templates/prompts/rerank_review.txt"),
        ),
    })
}

fn render(template: &PromptTemplate, pairs: Vec<(&'static str, String)>) -> String {
    let values: BTreeMap<&str, String> = pairs.into_iter().collect();
    template
        .render(&values)
        .unwrap_or_else(|e| panic!("prompt template out of sync with its builder: {e}"))
}

/// Documentation as it appears in prompts: whitespace collapsed to single
/// spaces, then cut to the doc budget.
pub fn prompt_doc(doc: &str, limits: &Limits) -> String {
    let flat = doc.split_whitespace().collect::<Vec<_>>().join(" ");
    truncate_to_tokens(&flat, limits.doc_tokens)
}

/// Like [`prompt_doc`] but safe inside a markdown table cell.
pub fn table_cell(doc: &str, limits: &Limits) -> String {
    let flat = doc.split_whitespace().collect::<Vec<_>>().join(" ");
    truncate_to_tokens(&flat.replace('|', "\\|"), limits.doc_tokens)
}

fn fenced(body: &str) -> String {
    format!("```\n{}\n```", body.trim_end())
}

pub fn failed_tests_line(prep: &PreparedClass) -> String {
    prep.test_ids().join(", ")
}

/// Per-test failure details. The test code is included on request.
pub fn test_infos(tests: &[FailedTest], with_code: bool) -> String {
    tests
        .iter()
        .map(|t| {
            let mut block = format!("Test: {}\n", t.id);
            if with_code {
                block.push_str(&format!("Test code:\n{}\n", fenced(&t.code)));
            }
            block.push_str(&format!("Stack trace:\n{}\n", fenced(&t.stack)));
            block.push_str(&format!("Test output:\n{}", fenced(&t.output)));
            block
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn causes_inline(causes: &[String]) -> String {
    causes
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {}", i + 1, c))
        .collect::<Vec<_>>()
        .join(" ")
}

fn causes_section(causes: Option<&[String]>) -> String {
    match causes {
        Some(c) if !c.is_empty() => {
            let lines: Vec<String> = c.iter().enumerate().map(|(i, c)| format!("{}. {}", i + 1, c)).collect();
            format!("Possible causes of the failure:\n{}", lines.join("\n"))
        }
        _ => String::new(),
    }
}

fn doc_or_placeholder(doc: String) -> String {
    if doc.is_empty() {
        "(no comment)".into()
    } else {
        doc
    }
}

pub fn test_behavior(prep: &PreparedClass, utility: &ExtractedClasses, limits: &Limits) -> String {
    let codes = prep
        .tests
        .iter()
        .map(|t| format!("// {}\n{}", t.id, fenced(&t.code)))
        .collect::<Vec<_>>()
        .join("\n\n");
    let utility_section = if utility.method_count() == 0 {
        String::new()
    } else {
        let blocks: Vec<String> = utility
            .classes
            .iter()
            .flat_map(|c| {
                c.methods.iter().map(move |m| {
                    format!(
                        "Method: {}.{}\nComment: {}\n{}",
                        c.fqn,
                        m.signature,
                        doc_or_placeholder(prompt_doc(&m.doc, limits)),
                        fenced(&m.code)
                    )
                })
            })
            .collect();
        format!(
            "Test utility code called by the failed tests:\n\n{}",
            blocks.join("\n\n")
        )
    };
    render(
        &templates().t1,
        vec![
            ("TEST CLASS", prep.class_fqn.clone()),
            ("FAILED TESTS", failed_tests_line(prep)),
            ("TEST CODES", codes),
            ("UTILITY SECTION", utility_section),
        ],
    )
}

pub fn failure_analysis(prep: &PreparedClass, behavior: Option<&str>) -> String {
    let behavior_section = behavior
        .map(|b| format!("Behavior of the failed tests:\n{}", b.trim()))
        .unwrap_or_default();
    render(
        &templates().t2,
        vec![
            ("TEST CLASS", prep.class_fqn.clone()),
            ("FAILED TESTS", failed_tests_line(prep)),
            ("TEST INFOS", test_infos(&prep.tests, true)),
            ("BEHAVIOR SECTION", behavior_section),
        ],
    )
}

/// `table` rows are `(class FQN, class doc)` in display order.
pub fn search_class(
    prep: &PreparedClass,
    causes: Option<&[String]>,
    table: &[(String, String)],
    limits: &Limits,
) -> String {
    let rows = table
        .iter()
        .map(|(fqn, doc)| format!("| {} | {} |", fqn, table_cell(doc, limits)))
        .collect::<Vec<_>>()
        .join("\n");
    render(
        &templates().t3,
        vec![
            ("TEST CLASS", prep.class_fqn.clone()),
            ("FAILED TESTS", failed_tests_line(prep)),
            ("TEST INFOS", test_infos(&prep.tests, false)),
            ("CAUSES SECTION", causes_section(causes)),
            ("CLASS TABLE", rows),
        ],
    )
}

pub fn doc_enhancement(class: &ExtractedClass, limits: &Limits) -> String {
    let listing = class
        .methods
        .iter()
        .map(|m| {
            format!(
                "Method: {}\nOriginal comment: {}\nCode:\n{}",
                m.signature,
                doc_or_placeholder(prompt_doc(&m.doc, limits)),
                fenced(&m.code)
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    render(
        &templates().t4,
        vec![
            ("CLASS NAME", class.fqn.clone()),
            ("CLASS DOC", doc_or_placeholder(prompt_doc(&class.doc, limits))),
            ("METHOD LISTING", listing),
        ],
    )
}

pub fn related_methods(
    prep: &PreparedClass,
    causes: Option<&[String]>,
    class: &ExtractedClass,
    docs: &IndexMap<String, String>,
    limits: &Limits,
) -> String {
    let rows = class
        .methods
        .iter()
        .map(|m| {
            let doc = docs.get(&m.signature).map_or(m.doc.as_str(), String::as_str);
            let cell = table_cell(doc, limits);
            format!("| {} | {} |", m.signature, doc_or_placeholder(cell))
        })
        .collect::<Vec<_>>()
        .join("\n");
    render(
        &templates().t5,
        vec![
            ("TEST CLASS", prep.class_fqn.clone()),
            ("FAILED TESTS", failed_tests_line(prep)),
            ("CAUSES SECTION", causes_section(causes)),
            ("CLASS NAME", class.fqn.clone()),
            ("CLASS DOC", doc_or_placeholder(prompt_doc(&class.doc, limits))),
            ("METHOD TABLE", rows),
        ],
    )
}

pub fn method_full_name(class: &str, signature: &str) -> String {
    format!("{class}.{signature}")
}

pub fn method_review(
    prep: &PreparedClass,
    causes: Option<&[String]>,
    class: &ExtractedClass,
    method: &ExtractedMethod,
    method_doc: &str,
    limits: &Limits,
) -> String {
    let causes = match causes {
        Some(c) if !c.is_empty() => causes_inline(c),
        _ => NO_CAUSES.to_string(),
    };
    render(
        &templates().t6,
        vec![
            ("TEST CLASS", prep.class_fqn.clone()),
            ("FAILED TESTS", failed_tests_line(prep)),
            ("METHOD NAME", method_full_name(&class.fqn, &method.signature)),
            ("TEST INFOS", test_infos(&prep.tests, false)),
            ("POSSIBLE CAUSES", causes),
            ("CLASS NAME", class.fqn.clone()),
            ("CLASS DOC", doc_or_placeholder(prompt_doc(&class.doc, limits))),
            ("METHOD DOC", doc_or_placeholder(prompt_doc(method_doc, limits))),
            ("METHOD CODE", format!("\n{}", fenced(&method.code))),
        ],
    )
}

/// One candidate for the top-1 decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuspectLine<'a> {
    pub class: &'a str,
    pub signature: &'a str,
    pub reason: &'a str,
}

pub fn top1(test_classes: &[String], suspects: &[SuspectLine<'_>]) -> String {
    let list = suspects
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let reason = s.reason.split_whitespace().collect::<Vec<_>>().join(" ");
            format!(
                "{}. {}\n   Class: {}\n   Reason: {}",
                i + 1,
                method_full_name(s.class, s.signature),
                s.class,
                if reason.is_empty() {
                    "(none given)".into()
                } else {
                    reason
                }
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    render(
        &templates().t7,
        vec![("TEST CLASSES", test_classes.join(", ")), ("SUSPECT LIST", list)],
    )
}

pub fn rerank_review(tests: &[FailedTest], class: &str, signature: &str, code: &str) -> String {
    render(
        &templates().rerank,
        vec![
            ("TEST INFOS", test_infos(tests, false)),
            ("CLASS NAME", class.to_string()),
            ("METHOD NAME", signature.to_string()),
            ("METHOD CODE", fenced(code)),
        ],
    )
}
