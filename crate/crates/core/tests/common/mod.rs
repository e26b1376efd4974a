#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use sopfl::index::{load_index, CodebaseIndex};
use sopfl::llm::{ReplayBackend, ScriptedBackend};
use sopfl::pipeline::input::{load_failures, BugInput};
use sopfl::pipeline::runlog::RunLog;
use sopfl::tokens::{estimate_tokens, TRUNCATION_MARKER};
use sopfl::trace::parse_trace;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn bugs_dir() -> PathBuf {
    fixtures().join("bugs")
}

pub fn index() -> Arc<CodebaseIndex> {
    Arc::new(load_index(&fixtures().join("mini_project.json")).unwrap())
}

pub fn bug(name: &str) -> BugInput {
    let coverage = Arc::new(parse_trace(&bugs_dir().join("trace.jsonl")).unwrap());
    let failures = load_failures(&bugs_dir().join(format!("{name}.failures.json"))).unwrap();
    BugInput::new(failures, index(), coverage)
}

pub const BUGS: [&str; 2] = ["mini-1", "mini-2"];

pub fn script() -> ScriptedBackend {
    ScriptedBackend::load(&bugs_dir().join("script.json")).unwrap()
}

pub fn cassette() -> ReplayBackend {
    ReplayBackend::open(&bugs_dir().join("cassette.jsonl")).unwrap()
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(bugs_dir().join("golden").join(format!("{name}.json"))).unwrap()
}

/// Text between `open` and the next `close` for every occurrence.
fn between<'a>(text: &'a str, open: &str, close: &str) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(open) {
        let after = &rest[start + open.len()..];
        let end = after.find(close).unwrap_or(after.len());
        out.push(&after[..end]);
        rest = &after[end..];
    }
    out
}

/// Documentation snippets shown in a prompt: comment lines and the
/// documentation cells of class and method tables.
pub fn prompt_docs(prompt: &str) -> Vec<&str> {
    let mut docs = Vec::new();
    for line in prompt.lines() {
        for prefix in [
            "Comment: ",
            "Original comment: ",
            "Documentation of the Class: ",
            "Suspicious Method Comment: ",
        ] {
            if let Some(doc) = line.strip_prefix(prefix) {
                docs.push(doc);
            }
        }
        if line.starts_with("| ") && line.ends_with(" |") && !line.starts_with("| ---") {
            let inner = &line[2..line.len() - 2];
            let mut split = None;
            let bytes = inner.as_bytes();
            for i in 0..bytes.len().saturating_sub(2) {
                if &inner[i..i + 3] == " | " && (i == 0 || bytes[i - 1] != b'\\') {
                    split = Some(i);
                    break;
                }
            }
            if let Some(i) = split {
                let cell = &inner[i + 3..];
                if cell != "Documentation" && cell != "Comment" {
                    docs.push(cell);
                }
            }
        }
    }
    docs
}

pub fn prompt_outputs(prompt: &str) -> Vec<&str> {
    between(prompt, "Test output:\n```\n", "\n```")
}

/// Number of per-test blocks in a prompt.
pub fn prompt_test_blocks(prompt: &str) -> usize {
    prompt
        .lines()
        .filter(|l| l.starts_with("Test: ") || l.starts_with("// "))
        .count()
}

/// Number of failed tests named on the failed-tests line.
pub fn prompt_failed_tests(prompt: &str) -> usize {
    prompt
        .lines()
        .find_map(|l| {
            l.split_once("failed: ")
                .or_else(|| l.split_once("failing test cases: "))
                .or_else(|| l.split_once("Failed tests: "))
        })
        .map_or(0, |(_, list)| list.split(", ").filter(|s| !s.is_empty()).count())
}

/// Budget violations across every prompt of a run log, plus how many
/// truncation markers were seen.
pub struct BudgetCheck {
    pub violations: Vec<String>,
    pub prompts: usize,
    pub truncated_docs: usize,
    pub truncated_outputs: usize,
}

pub fn check_budget(log: &RunLog, doc_tokens: usize, output_tokens: usize, max_tests: usize) -> BudgetCheck {
    let mut check = BudgetCheck {
        violations: Vec::new(),
        prompts: 0,
        truncated_docs: 0,
        truncated_outputs: 0,
    };
    for entry in &log.entries {
        let prompt = entry.prompt();
        check.prompts += 1;
        let name = format!(
            "{}/{}{}",
            entry.run,
            entry.task,
            entry.item.map_or(String::new(), |i| format!("#{i}"))
        );
        for doc in prompt_docs(prompt) {
            if estimate_tokens(doc) > doc_tokens {
                check
                    .violations
                    .push(format!("{name}: doc of {} tokens", estimate_tokens(doc)));
            }
            check.truncated_docs += usize::from(doc.ends_with(TRUNCATION_MARKER));
        }
        for out in prompt_outputs(prompt) {
            if estimate_tokens(out) > output_tokens {
                check
                    .violations
                    .push(format!("{name}: output of {} tokens", estimate_tokens(out)));
            }
            check.truncated_outputs += usize::from(out.ends_with(TRUNCATION_MARKER));
        }
        if prompt_test_blocks(prompt) > max_tests {
            check
                .violations
                .push(format!("{name}: {} test blocks", prompt_test_blocks(prompt)));
        }
        if prompt_failed_tests(prompt) > max_tests {
            check
                .violations
                .push(format!("{name}: {} failed tests named", prompt_failed_tests(prompt)));
        }
    }
    check
}

pub mod oracle {
    use std::collections::{BTreeMap, BTreeSet};

    use rand::seq::SliceRandom;
    use rand::Rng;
    use sopfl::sbfl::{MethodId, Spectrum, SpectrumSet};
    use sopfl::trace::{CoverageRate, CoverageView, CoveredClass};

    /// The formula evaluated directly in f64.
    pub fn ochiai(ef: u64, ep: u64, tf: u64) -> f64 {
        if ef == 0 {
            return 0.0;
        }
        ef as f64 / (((ef + ep) * tf) as f64).sqrt()
    }

    /// Random coverage view: up to `max_tests` tests over classes drawn
    /// from a pool of `max_classes`, each covering a few of 6 methods.
    pub fn random_view(rng: &mut impl Rng, max_tests: usize, max_classes: usize) -> CoverageView {
        let tests = rng.gen_range(1..=max_tests);
        let pool = rng.gen_range(1..=max_classes);
        let mut view = CoverageView::default();
        for t in 0..tests {
            let mut classes: Vec<usize> = (0..pool).filter(|_| rng.gen_bool(0.7)).collect();
            classes.shuffle(rng);
            let covered = classes
                .into_iter()
                .map(|c| {
                    let mut sigs: Vec<usize> = (0..6).filter(|_| rng.gen_bool(0.6)).collect();
                    if sigs.is_empty() {
                        sigs.push(rng.gen_range(0..6));
                    }
                    sigs.shuffle(rng);
                    CoveredClass::new(format!("p.C{c:02}"), sigs.iter().map(|s| format!("m{s}()")))
                })
                .collect();
            view.per_test.insert(format!("p.T::t{t}"), covered);
        }
        view
    }

    /// Fold of pairwise set intersections, then the documented order.
    pub fn fold_intersection(view: &CoverageView) -> Vec<(String, Vec<String>)> {
        let as_sets = |classes: &Vec<CoveredClass>| -> BTreeMap<String, BTreeSet<String>> {
            classes
                .iter()
                .map(|c| (c.fqn.clone(), c.signatures.iter().cloned().collect()))
                .collect()
        };
        let mut tests = view.per_test.values();
        let first = tests.next().expect("non-empty view");
        let mut acc = as_sets(first);
        for classes in tests {
            let other = as_sets(classes);
            acc = acc
                .into_iter()
                .filter_map(|(fqn, sigs)| {
                    let o = other.get(&fqn)?;
                    Some((fqn, sigs.intersection(o).cloned().collect()))
                })
                .collect();
        }
        let mut out: Vec<(String, Vec<String>)> = acc
            .into_iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|(fqn, sigs)| {
                // signature order as first seen in the first test
                let order = first.iter().find(|c| c.fqn == fqn).unwrap();
                let ordered = order.signatures.iter().filter(|s| sigs.contains(*s)).cloned().collect();
                (fqn, ordered)
            })
            .collect();
        out.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn random_rates(rng: &mut impl Rng, max: usize) -> Vec<CoverageRate> {
        let n = rng.gen_range(0..=max);
        (0..n)
            .map(|i| {
                let total = rng.gen_range(0..6usize);
                let covered = if total == 0 { 0 } else { rng.gen_range(0..=total) };
                CoverageRate {
                    class_fqn: format!("p.C{:03}", (i * 37) % 101),
                    covered,
                    total,
                    rate: if total == 0 { 0.0 } else { covered as f64 / total as f64 },
                }
            })
            .collect()
    }

    /// Sort key of a coverage rate: larger is better.
    pub fn rate_key(r: &CoverageRate) -> (f64, usize, std::cmp::Reverse<String>) {
        (r.rate, r.covered, std::cmp::Reverse(r.class_fqn.clone()))
    }

    pub fn random_spectra(rng: &mut impl Rng, n: usize) -> SpectrumSet {
        let total_failed = rng.gen_range(1..=10u64);
        SpectrumSet {
            total_failed,
            spectra: (0..n)
                .map(|i| Spectrum {
                    method: MethodId::new(format!("p.C{}", i % 4), format!("m{i}()")),
                    failed_cover: rng.gen_range(0..=total_failed),
                    passed_cover: rng.gen_range(0..=10),
                })
                .collect(),
        }
    }
}
