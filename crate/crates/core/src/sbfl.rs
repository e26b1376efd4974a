//! Spectrum-based suspiciousness (Ochiai) and ranking.
//!
//! ```text
//! ochiai(e) = ef / sqrt((ef + ep) * total_failed)
//! ```
//!
//! where `ef`/`ep` count the failed/passed tests covering `e`. An element no
//! failed test covers scores 0, including the `0/0` case.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// `(class FQN, signature)`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MethodId {
    pub class: String,
    pub sig: String,
}

impl MethodId {
    pub fn new(class: impl Into<String>, sig: impl Into<String>) -> Self {
        Self {
            class: class.into(),
            sig: sig.into(),
        }
    }
}

impl std::fmt::Display for MethodId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.class, self.sig)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spectrum {
    pub method: MethodId,
    pub failed_cover: u64,
    pub passed_cover: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpectrumSet {
    pub spectra: Vec<Spectrum>,
    pub total_failed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum SbflError {
    #[error("total number of failed tests must be at least 1")]
    InvalidTotal,
    #[error("{method} is covered by {failed_cover} failed tests but only {total_failed} failed in total")]
    Inconsistent {
        method: MethodId,
        failed_cover: u64,
        total_failed: u64,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("spectrum file: {0}")]
    Schema(String),
}

pub fn ochiai(s: &Spectrum, total_failed: u64) -> Result<f64, SbflError> {
    if total_failed == 0 {
        return Err(SbflError::InvalidTotal);
    }
    if s.failed_cover > total_failed {
        return Err(SbflError::Inconsistent {
            method: s.method.clone(),
            failed_cover: s.failed_cover,
            total_failed,
        });
    }
    if s.failed_cover == 0 {
        return Ok(0.0);
    }
    let ef = s.failed_cover as f64;
    let denom = ((s.failed_cover + s.passed_cover) as f64 * total_failed as f64).sqrt();
    Ok(ef / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranked {
    pub method: MethodId,
    pub score: f64,
    pub failed_cover: u64,
}

/// Ranking key: score descending, then `failed_cover` descending, then
/// method id.
pub fn rank_order(a: &Ranked, b: &Ranked) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.failed_cover.cmp(&a.failed_cover))
        .then_with(|| a.method.cmp(&b.method))
}

pub fn rank(set: &SpectrumSet) -> Result<Vec<Ranked>, SbflError> {
    if set.total_failed == 0 {
        return Err(SbflError::InvalidTotal);
    }
    let mut ranked = set
        .spectra
        .iter()
        .map(|s| {
            Ok(Ranked {
                method: s.method.clone(),
                score: ochiai(s, set.total_failed)?,
                failed_cover: s.failed_cover,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    ranked.sort_by(rank_order);
    Ok(ranked)
}

pub fn top_k(ranked: &[Ranked], k: usize) -> &[Ranked] {
    &ranked[..k.min(ranked.len())]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumFile {
    total_failed: u64,
    spectra: Vec<SpectrumLine>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumLine {
    class: String,
    sig: String,
    ef: u64,
    ep: u64,
}

impl SpectrumSet {
    pub fn from_json(text: &str) -> Result<Self, SbflError> {
        let file: SpectrumFile = serde_json::from_str(text).map_err(|e| SbflError::Schema(e.to_string()))?;
        Ok(SpectrumSet {
            total_failed: file.total_failed,
            spectra: file
                .spectra
                .into_iter()
                .map(|l| Spectrum {
                    method: MethodId::new(l.class, l.sig),
                    failed_cover: l.ef,
                    passed_cover: l.ep,
                })
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        let file = SpectrumFile {
            total_failed: self.total_failed,
            spectra: self
                .spectra
                .iter()
                .map(|s| SpectrumLine {
                    class: s.method.class.clone(),
                    sig: s.method.sig.clone(),
                    ef: s.failed_cover,
                    ep: s.passed_cover,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("spectra serialize")
    }
}

pub fn load_spectra(path: &Path) -> Result<SpectrumSet, SbflError> {
    let text = std::fs::read_to_string(path).map_err(|source| SbflError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SpectrumSet::from_json(&text)
}
