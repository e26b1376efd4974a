//! The structured model of the project under analysis: classes, their
//! methods, documentation and source text.
//!
//! The index is produced by an external indexer and loaded from JSON. It is
//! immutable once loaded and can be shared freely between concurrent runs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Whether a class lives in the test tree or the production source tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Test,
    Source,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Test => f.write_str("test"),
            Scope::Source => f.write_str("source"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    /// `name(paramTypes) returnType`, e.g. `init(int,String) int`.
    pub signature: String,
    pub doc: String,
    pub code: String,
}

impl MethodEntry {
    /// The bare method name, i.e. everything before the opening parenthesis.
    pub fn name(&self) -> &str {
        method_name(&self.signature)
    }
}

/// Returns the method name part of a signature (`foo` for `foo(int) void`).
pub fn method_name(signature: &str) -> &str {
    signature.split('(').next().unwrap_or(signature).trim()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub fqn: String,
    pub doc: String,
    pub scope: Scope,
    pub methods: Vec<MethodEntry>,
}

impl ClassEntry {
    pub fn method(&self, signature: &str) -> Option<&MethodEntry> {
        self.methods.iter().find(|m| m.signature == signature)
    }

    /// Last dot-separated segment of the FQN.
    pub fn simple_name(&self) -> &str {
        simple_name(&self.fqn)
    }
}

pub fn simple_name(fqn: &str) -> &str {
    fqn.rsplit('.').next().unwrap_or(fqn)
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {field}: {reason}")]
    Schema { field: String, reason: String },
}

impl IndexError {
    fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        IndexError::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexFile {
    classes: Vec<ClassEntry>,
}

/// All classes of the project keyed by fully-qualified name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodebaseIndex {
    classes: BTreeMap<String, ClassEntry>,
}

impl CodebaseIndex {
    /// Builds an index from class entries, enforcing FQN and signature
    /// uniqueness.
    pub fn from_classes(classes: Vec<ClassEntry>) -> Result<Self, IndexError> {
        let mut map = BTreeMap::new();
        for (i, class) in classes.into_iter().enumerate() {
            validate_class(i, &class)?;
            if map.contains_key(&class.fqn) {
                return Err(IndexError::schema("classes", format!("duplicate fqn {}", class.fqn)));
            }
            map.insert(class.fqn.clone(), class);
        }
        Ok(Self { classes: map })
    }

    pub fn from_json(text: &str) -> Result<Self, IndexError> {
        let file: IndexFile = serde_json::from_str(text).map_err(|e| IndexError::schema("index", e.to_string()))?;
        Self::from_classes(file.classes)
    }

    pub fn to_json(&self) -> String {
        let file = IndexFile {
            classes: self.classes.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&file).expect("index serializes")
    }

    pub fn class(&self, fqn: &str) -> Option<&ClassEntry> {
        self.classes.get(fqn)
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassEntry> {
        self.classes.values()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn method_count(&self) -> usize {
        self.classes.values().map(|c| c.methods.len()).sum()
    }
}

fn validate_class(i: usize, class: &ClassEntry) -> Result<(), IndexError> {
    if class.fqn.trim().is_empty() {
        return Err(IndexError::schema(format!("classes[{i}].fqn"), "empty fqn"));
    }
    let mut seen = HashSet::new();
    for (j, method) in class.methods.iter().enumerate() {
        let field = format!("classes[{i}].methods[{j}].signature");
        if !is_well_formed_signature(&method.signature) {
            return Err(IndexError::schema(
                field,
                format!("malformed signature {:?}", method.signature),
            ));
        }
        if !seen.insert(method.signature.as_str()) {
            return Err(IndexError::schema(
                field,
                format!("duplicate signature {} in {}", method.signature, class.fqn),
            ));
        }
    }
    Ok(())
}

/// `name(params)` optionally followed by a return type.
fn is_well_formed_signature(sig: &str) -> bool {
    let Some(open) = sig.find('(') else {
        return false;
    };
    let Some(close) = sig.rfind(')') else {
        return false;
    };
    open > 0 && close > open && !sig[..open].trim().is_empty()
}

/// Reads and validates an index JSON file.
pub fn load_index(path: &Path) -> Result<CodebaseIndex, IndexError> {
    let text = std::fs::read_to_string(path).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    CodebaseIndex::from_json(&text)
}

/// `None` means the class or the signature is not in the index.
pub fn lookup_method<'a>(index: &'a CodebaseIndex, class_fqn: &str, signature: &str) -> Option<&'a MethodEntry> {
    index.class(class_fqn)?.method(signature)
}
