//! TOML configuration. Every field has a default; command-line flags
//! override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::llm::{CompletionParams, DEFAULT_PRICE_PER_1K};
use crate::pipeline::{AblationConfig, Limits, PipelineSettings};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Live,
    Replay,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: String,
    pub endpoint: String,
    pub price_per_1k: f64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub reasks: usize,
    pub jobs: usize,
    pub backend: BackendKind,
    /// Cassette read by the replay backend.
    pub cassette: Option<PathBuf>,
    /// Rules for the scripted backend.
    pub script: Option<PathBuf>,
    /// Cassette the live backend appends to.
    pub record: Option<PathBuf>,
    pub limits: Limits,
    pub ablation: AblationConfig,
}

impl Default for Config {
    fn default() -> Self {
        let params = CompletionParams::default();
        Self {
            model: "gpt-3.5-turbo".into(),
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            price_per_1k: DEFAULT_PRICE_PER_1K,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            reasks: 2,
            jobs: 1,
            backend: BackendKind::default(),
            cassette: None,
            script: None,
            record: None,
            limits: Limits::default(),
            ablation: AblationConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let config: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a file; relative paths inside it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text).map_err(|reason| ConfigError::Invalid {
            path: path.to_path_buf(),
            reason,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.cassette, &mut config.script, &mut config.record]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.price_per_1k.is_nan() || self.price_per_1k < 0.0 {
            return Err("price_per_1k must be non-negative".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err("temperature must be within 0..=2".into());
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        let l = self.limits;
        if l.max_failed_tests == 0 || l.top_classes == 0 || l.rerank_k == 0 {
            return Err("limits.max_failed_tests, top_classes and rerank_k must be positive".into());
        }
        if self.jobs == 0 {
            return Err("jobs must be positive".into());
        }
        Ok(())
    }

    pub fn settings(&self) -> PipelineSettings {
        PipelineSettings {
            limits: self.limits,
            ablation: self.ablation,
            params: CompletionParams {
                temperature: self.temperature,
                max_tokens: self.max_tokens,
            },
            price_per_1k: self.price_per_1k,
            reasks: self.reasks,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.settings(), PipelineSettings::default());
    }

    #[test]
    fn partial_tables_keep_other_defaults() {
        let c = Config::from_toml("backend = \"replay\"\n[limits]\ndoc_tokens = 50\n[ablation]\nenable_t4 = false\n")
            .unwrap();
        assert_eq!(c.backend, BackendKind::Replay);
        assert_eq!(c.limits.doc_tokens, 50);
        assert_eq!(c.limits.output_tokens, 200);
        assert!(!c.ablation.enable_t4 && c.ablation.enable_t2);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(Config::from_toml("modle = \"x\"").is_err());
        assert!(Config::from_toml("jobs = 0").is_err());
        assert!(Config::from_toml("[limits]\nrerank_k = 0").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sopfl.toml");
        std::fs::write(&path, "cassette = \"c.jsonl\"\n").unwrap();
        let c = Config::load(&path).unwrap();
        assert_eq!(c.cassette.unwrap(), dir.path().join("c.jsonl"));
    }
}
