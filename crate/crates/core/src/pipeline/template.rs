//! Minimal prompt templates with `[UPPER CASE]` placeholders.
//!
//! Every placeholder in a template is a required field. Rendering is a single
//! pass, so field values may themselves contain bracketed text. A field
//! rendered empty that sits alone between blank lines is removed together
//! with one of the blank lines.

use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Field(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template}: missing value for [{field}]")]
    Missing { template: String, field: String },
    #[error("template {template}: unknown field [{field}]")]
    Unknown { template: String, field: String },
}

fn is_placeholder(inner: &str) -> bool {
    inner.len() >= 2
        && inner.starts_with(|c: char| c.is_ascii_uppercase())
        && inner.ends_with(|c: char| c.is_ascii_uppercase() || c.is_ascii_digit())
        && inner
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == ' ')
}

impl PromptTemplate {
    pub fn parse(name: impl Into<String>, body: &str) -> Self {
        let mut segments = Vec::new();
        let mut text = String::new();
        let mut rest = body;
        while let Some(open) = rest.find('[') {
            let after = &rest[open + 1..];
            match after.find(']') {
                Some(close) if is_placeholder(&after[..close]) => {
                    text.push_str(&rest[..open]);
                    if !text.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut text)));
                    }
                    segments.push(Segment::Field(after[..close].to_string()));
                    rest = &after[close + 1..];
                }
                _ => {
                    text.push_str(&rest[..=open]);
                    rest = after;
                }
            }
        }
        text.push_str(rest);
        if !text.is_empty() {
            segments.push(Segment::Text(text));
        }
        Self {
            name: name.into(),
            segments,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The placeholders this template requires.
    pub fn fields(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Field(f) => Some(f.as_str()),
                Segment::Text(_) => None,
            })
            .collect()
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let fields = self.fields();
        if let Some(unknown) = values.keys().find(|k| !fields.contains(*k)) {
            return Err(TemplateError::Unknown {
                template: self.name.clone(),
                field: unknown.to_string(),
            });
        }
        let mut out = String::new();
        let mut skip_blank = false;
        for (i, seg) in self.segments.iter().enumerate() {
            match seg {
                Segment::Text(t) => {
                    let t = if skip_blank {
                        t.strip_prefix("\n\n").unwrap_or(t)
                    } else {
                        t
                    };
                    skip_blank = false;
                    out.push_str(t);
                }
                Segment::Field(f) => {
                    let value = values.get(f.as_str()).ok_or_else(|| TemplateError::Missing {
                        template: self.name.clone(),
                        field: f.clone(),
                    })?;
                    if value.is_empty() {
                        let next_blank = matches!(
                            self.segments.get(i + 1),
                            Some(Segment::Text(t)) if t.starts_with("\n\n")
                        );
                        skip_blank = out.ends_with("\n\n") && next_blank;
                    }
                    out.push_str(value);
                }
            }
        }
        Ok(out.trim_end().to_string())
    }
}
