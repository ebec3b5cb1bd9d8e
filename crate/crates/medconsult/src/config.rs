//! Service configuration, read from TOML. Relative paths are resolved against
//! the directory holding the config file.

use std::path::{Path, PathBuf};

use medconsult_core::eicl::{ContextWeights, LoopConfig};
use medconsult_core::pipeline::EngineConfig;
use medconsult_core::sentiment::Thresholds;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::remote::RemoteConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Knowledge documents, JSONL. Used with `aliases` when `index` is unset.
    pub docs: Option<PathBuf>,
    /// Alias table, TSV.
    pub aliases: Option<PathBuf>,
    /// Prebuilt index artifact; takes precedence over `docs` + `aliases`.
    pub index: Option<PathBuf>,
    /// Labeled consultation records used as shared demonstrations.
    pub demos: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub negators: Option<PathBuf>,
    pub symptoms: Option<PathBuf>,
    /// One regex per line; matching corpus lines are rejected on ingest.
    pub pii_patterns: Option<PathBuf>,
    /// Session and trace storage. Persistence is off when unset.
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Scripted responses, JSONL `{"text": ...}`.
    pub script: Option<PathBuf>,
    #[serde(flatten)]
    pub remote: RemoteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub top_k: usize,
    pub demos_k: usize,
    pub max_rounds: usize,
    pub max_tokens: u32,
    pub temperature: f64,
    pub token_budget: usize,
    pub neg_cut: f64,
    pub pos_cut: f64,
    pub emotional_weight: f64,
    pub document_weight: f64,
    pub decay: f64,
}

impl Default for EngineSection {
    fn default() -> Self {
        let e = EngineConfig::default();
        let t = Thresholds::default();
        EngineSection {
            top_k: e.top_k,
            demos_k: e.demos_k,
            max_rounds: e.generation.max_rounds,
            max_tokens: e.generation.max_tokens,
            temperature: e.generation.temperature,
            token_budget: e.generation.prompt.token_budget,
            neg_cut: t.neg_cut,
            pos_cut: t.pos_cut,
            emotional_weight: e.context.emotional,
            document_weight: e.context.document,
            decay: e.context.decay,
        }
    }
}

impl EngineSection {
    pub fn engine_config(&self) -> EngineConfig {
        let mut generation = LoopConfig { max_rounds: self.max_rounds, max_tokens: self.max_tokens, temperature: self.temperature, ..Default::default() };
        generation.prompt.token_budget = self.token_budget;
        EngineConfig {
            top_k: self.top_k,
            demos_k: self.demos_k,
            context: ContextWeights { emotional: self.emotional_weight, document: self.document_weight, decay: self.decay },
            generation,
        }
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        Thresholds::new(self.neg_cut, self.pos_cut).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdScheme {
    #[default]
    Uuid,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: String,
    pub port: u16,
    /// Required as a bearer token on admin routes. Admin routes are disabled
    /// when unset.
    pub admin_token: Option<String>,
    pub ids: IdScheme,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection { bind: "127.0.0.1".into(), port: 8080, admin_token: None, ids: IdScheme::Uuid }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub backend: BackendConfig,
    pub engine: EngineSection,
    pub service: ServiceSection,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&crate::formats::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.docs,
            &mut p.aliases,
            &mut p.index,
            &mut p.demos,
            &mut p.lexicon,
            &mut p.negators,
            &mut p.symptoms,
            &mut p.pii_patterns,
            &mut p.data_dir,
            &mut self.backend.script,
        ] {
            resolve(base, slot);
        }
    }
}
