//! Method-call traces of failed tests and the coverage views derived from
//! them: covered classes per test, the classes common to all failed tests,
//! method-level coverage rates and top-N class reduction.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use crate::index::{CodebaseIndex, Scope};

/// One line of the trace JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    /// `ClassFQN::testMethod`
    pub test: String,
    pub class: String,
    pub sig: String,
    pub scope: Scope,
    pub seq: u64,
}

/// A class touched by a test, with the signatures it covered in first-seen
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoveredClass {
    pub fqn: String,
    pub signatures: IndexSet<String>,
}

impl CoveredClass {
    pub fn new<I, S>(fqn: impl Into<String>, signatures: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            fqn: fqn.into(),
            signatures: signatures.into_iter().map(Into::into).collect(),
        }
    }
}

/// Covered classes per test id, for a single scope.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageView {
    pub per_test: BTreeMap<String, Vec<CoveredClass>>,
}

impl CoverageView {
    pub fn is_empty(&self) -> bool {
        self.per_test.is_empty()
    }

    pub fn test_ids(&self) -> impl Iterator<Item = &str> {
        self.per_test.keys().map(String::as_str)
    }

    /// Restricts the view to the given tests.
    pub fn restrict<'a>(&self, tests: impl IntoIterator<Item = &'a str>) -> CoverageView {
        let mut per_test = BTreeMap::new();
        for id in tests {
            if let Some(classes) = self.per_test.get(id) {
                per_test.insert(id.to_string(), classes.clone());
            }
        }
        CoverageView { per_test }
    }

    fn from_records<'a>(records: impl Iterator<Item = &'a TraceRecord>) -> Self {
        let mut grouped: BTreeMap<String, IndexMap<String, IndexSet<String>>> = BTreeMap::new();
        for r in records {
            grouped
                .entry(r.test.clone())
                .or_default()
                .entry(r.class.clone())
                .or_default()
                .insert(r.sig.clone());
        }
        let per_test = grouped
            .into_iter()
            .map(|(test, classes)| {
                let classes = classes
                    .into_iter()
                    .map(|(fqn, signatures)| CoveredClass { fqn, signatures })
                    .collect();
                (test, classes)
            })
            .collect();
        CoverageView { per_test }
    }
}

/// Parsed trace split by scope.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScopedCoverage {
    pub test: CoverageView,
    pub source: CoverageView,
}

impl ScopedCoverage {
    pub fn scope(&self, scope: Scope) -> &CoverageView {
        match scope {
            Scope::Test => &self.test,
            Scope::Source => &self.source,
        }
    }

    pub fn restrict(&self, tests: &[&str]) -> ScopedCoverage {
        ScopedCoverage {
            test: self.test.restrict(tests.iter().copied()),
            source: self.source.restrict(tests.iter().copied()),
        }
    }

    /// Groups already-validated records.
    pub fn from_records(records: &[TraceRecord]) -> Self {
        ScopedCoverage {
            test: CoverageView::from_records(records.iter().filter(|r| r.scope == Scope::Test)),
            source: CoverageView::from_records(records.iter().filter(|r| r.scope == Scope::Source)),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("trace line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("coverage view has no tests")]
    EmptyView,
}

/// Parses trace JSONL text. Blank lines are ignored.
pub fn parse_trace_str(text: &str) -> Result<ScopedCoverage, TraceError> {
    parse_lines(
        text.lines().map(|l| Ok::<_, std::io::Error>(l.to_string())),
        Path::new("<memory>"),
    )
}

/// Reads and parses a trace JSONL file.
pub fn parse_trace(path: &Path) -> Result<ScopedCoverage, TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    parse_lines(std::io::BufReader::new(file).lines(), path)
}

fn parse_lines<I>(lines: I, path: &Path) -> Result<ScopedCoverage, TraceError>
where
    I: Iterator<Item = Result<String, std::io::Error>>,
{
    let mut records = Vec::new();
    let mut last_seq: BTreeMap<String, u64> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(&line).map_err(|e| TraceError::Schema {
            line: line_no,
            reason: e.to_string(),
        })?;
        let schema = |reason: String| TraceError::Schema { line: line_no, reason };
        if record.test.is_empty() {
            return Err(schema("empty test id".into()));
        }
        if record.class.is_empty() || record.sig.is_empty() {
            return Err(schema("empty class or signature".into()));
        }
        if let Some(prev) = last_seq.get(&record.test) {
            if record.seq <= *prev {
                return Err(schema(format!(
                    "seq {} not increasing for test {} (previous {prev})",
                    record.seq, record.test
                )));
            }
        }
        last_seq.insert(record.test.clone(), record.seq);
        records.push(record);
    }
    Ok(ScopedCoverage::from_records(&records))
}

/// Classes and signatures covered by every test of the view.
///
/// Signature order follows the first test (by id). Classes whose signature
/// intersection is empty are dropped. Output is sorted by covered-signature
/// count descending, then FQN.
pub fn class_intersection(view: &CoverageView) -> Result<Vec<CoveredClass>, TraceError> {
    let mut tests = view.per_test.values();
    let first = tests.next().ok_or(TraceError::EmptyView)?;
    let mut common: Vec<CoveredClass> = first.clone();
    for classes in tests {
        let lookup: BTreeMap<&str, &CoveredClass> = classes.iter().map(|c| (c.fqn.as_str(), c)).collect();
        common = common
            .into_iter()
            .filter_map(|mut c| {
                let other = lookup.get(c.fqn.as_str())?;
                c.signatures.retain(|s| other.signatures.contains(s));
                Some(c)
            })
            .collect();
    }
    common.retain(|c| !c.signatures.is_empty());
    common.sort_by(|a, b| {
        b.signatures
            .len()
            .cmp(&a.signatures.len())
            .then_with(|| a.fqn.cmp(&b.fqn))
    });
    Ok(common)
}

/// Classes covered by any test, with the union of their signatures.
/// Classes appear in first-seen order over tests sorted by id.
pub fn class_union(view: &CoverageView) -> Vec<CoveredClass> {
    let mut merged: IndexMap<String, IndexSet<String>> = IndexMap::new();
    for classes in view.per_test.values() {
        for c in classes {
            merged
                .entry(c.fqn.clone())
                .or_default()
                .extend(c.signatures.iter().cloned());
        }
    }
    merged
        .into_iter()
        .map(|(fqn, signatures)| CoveredClass { fqn, signatures })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtractedMethod {
    pub signature: String,
    pub doc: String,
    pub code: String,
    pub in_index: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtractedClass {
    pub fqn: String,
    pub doc: String,
    pub in_index: bool,
    pub methods: Vec<ExtractedMethod>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtractedClasses {
    pub classes: Vec<ExtractedClass>,
}

impl ExtractedClasses {
    /// Number of classes plus methods that could not be found in the index.
    pub fn flag_count(&self) -> usize {
        self.classes
            .iter()
            .map(|c| usize::from(!c.in_index) + c.methods.iter().filter(|m| !m.in_index).count())
            .sum()
    }

    pub fn get(&self, fqn: &str) -> Option<&ExtractedClass> {
        self.classes.iter().find(|c| c.fqn == fqn)
    }

    pub fn method_count(&self) -> usize {
        self.classes.iter().map(|c| c.methods.len()).sum()
    }
}

/// Joins covered classes and signatures with their docs and code.
pub fn augment(classes: &[CoveredClass], index: &CodebaseIndex) -> ExtractedClasses {
    let classes = classes
        .iter()
        .map(|covered| {
            let entry = index.class(&covered.fqn);
            let methods = covered
                .signatures
                .iter()
                .map(|sig| match entry.and_then(|e| e.method(sig)) {
                    Some(m) => ExtractedMethod {
                        signature: sig.clone(),
                        doc: m.doc.clone(),
                        code: m.code.clone(),
                        in_index: true,
                    },
                    None => ExtractedMethod {
                        signature: sig.clone(),
                        doc: String::new(),
                        code: String::new(),
                        in_index: false,
                    },
                })
                .collect();
            ExtractedClass {
                fqn: covered.fqn.clone(),
                doc: entry.map(|e| e.doc.clone()).unwrap_or_default(),
                in_index: entry.is_some(),
                methods,
            }
        })
        .collect();
    ExtractedClasses { classes }
}

/// Method-level coverage of one class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRate {
    pub class_fqn: String,
    pub covered: usize,
    pub total: usize,
    pub rate: f64,
}

/// One rate per input class: covered indexed methods over all indexed
/// methods of the class (0 when the class is unknown or empty).
pub fn coverage_rates(classes: &[CoveredClass], index: &CodebaseIndex) -> Vec<CoverageRate> {
    classes
        .iter()
        .map(|c| {
            let (covered, total) = match index.class(&c.fqn) {
                Some(entry) => {
                    let covered = c.signatures.iter().filter(|s| entry.method(s).is_some()).count();
                    (covered, entry.methods.len())
                }
                None => (0, 0),
            };
            let rate = if total > 0 { covered as f64 / total as f64 } else { 0.0 };
            CoverageRate {
                class_fqn: c.fqn.clone(),
                covered,
                total,
                rate,
            }
        })
        .collect()
}

/// Ordering used by [`reduce_top_n`]: highest rate first, then most covered
/// methods, then FQN.
pub fn rate_order(a: &CoverageRate, b: &CoverageRate) -> Ordering {
    b.rate
        .total_cmp(&a.rate)
        .then_with(|| b.covered.cmp(&a.covered))
        .then_with(|| a.class_fqn.cmp(&b.class_fqn))
}

/// Keeps the `n` classes with the highest method-level coverage.
///
/// # Panics
///
/// If `n` is zero.
pub fn reduce_top_n(rates: &[CoverageRate], n: usize) -> Vec<String> {
    assert!(n >= 1, "reduce_top_n needs n >= 1");
    let mut sorted: Vec<&CoverageRate> = rates.iter().collect();
    sorted.sort_by(|a, b| rate_order(a, b));
    sorted.into_iter().take(n).map(|r| r.class_fqn.clone()).collect()
}
