//! Run configuration: a TOML file plus `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cca::CcaConfig;
use crate::data::CorpusFormat;
use crate::dcca::{Activation, TrainConfig};
use crate::discourse::{DiscourseConfig, Mode, DEFAULT_DEDUP_TAU};
use crate::embedding::{EmbeddingProvider, DEFAULT_DIM};
use crate::eval::EvalOptions;
use crate::retrieval::Aggregation;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: PathBuf,
    pub format: CorpusFormat,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("corpus.tsv"),
            format: CorpusFormat::Tsv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    HashedRandom,
    FileBacked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub dim_p: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::HashedRandom,
            dim_p: DEFAULT_DIM,
            seed: 0,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcaSettings {
    pub reg_r: f64,
    pub eig_floor: f64,
}

impl Default for CcaSettings {
    fn default() -> Self {
        let d = CcaConfig::default();
        Self {
            reg_r: d.reg_r,
            eig_floor: d.eig_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            max_iters: d.max_iters,
            tol: d.tol,
            seed: d.seed,
            hidden_widths: vec![16],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub embedding: EmbeddingConfig,
    pub mode: Mode,
    pub cca: CcaSettings,
    pub train: TrainSettings,
    pub dedup_tau: f64,
    pub aggregation: Aggregation,
    pub num_candidates: usize,
    pub ks: Vec<usize>,
    pub negatives: usize,
    /// BLEU/ROUGE use the best of the top `best_of` selections.
    pub best_of: usize,
    /// Keep only the last `max_turns` context turns (0 = all).
    pub max_turns: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            embedding: EmbeddingConfig::default(),
            mode: Mode::LinearCca,
            cca: CcaSettings::default(),
            train: TrainSettings::default(),
            dedup_tau: DEFAULT_DEDUP_TAU,
            aggregation: Aggregation::Max,
            num_candidates: 20,
            ks: vec![1, 3, 5, 10, 20],
            negatives: 1,
            best_of: 1,
            max_turns: 0,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// Parses the right-hand side of `--set key=value` as a TOML value, falling
/// back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidConfig(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override key {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))
    }

    /// Reads `path` (if any), applies overrides, and checks value ranges.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        let cfg = Self::from_toml_str(&text, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Range checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.embedding.dim_p < 2 {
            return bad(format!("embedding.dim_p must be >= 2, got {}", self.embedding.dim_p));
        }
        if self.embedding.kind == EmbeddingKind::FileBacked && self.embedding.file.is_none() {
            return bad("embedding.file is required for file-backed embeddings".into());
        }
        self.cca_config().validate()?;
        self.train_config().validate()?;
        if !(self.dedup_tau > 0.0 && self.dedup_tau <= 1.0) {
            return bad(format!("dedup_tau must be in (0, 1], got {}", self.dedup_tau));
        }
        if self.num_candidates < 2 {
            return bad("num_candidates must be >= 2".into());
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("ks must be a non-empty list of positive integers".into());
        }
        if self.best_of == 0 {
            return bad("best_of must be >= 1".into());
        }
        if self.train.hidden_widths.contains(&0) {
            return bad("train.hidden_widths must be positive".into());
        }
        Ok(())
    }

    pub fn require_file(&self, path: &Path, what: &str) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{what} {} does not exist", path.display())))
        }
    }

    pub fn cca_config(&self) -> CcaConfig {
        CcaConfig {
            reg_r: self.cca.reg_r,
            eig_floor: self.cca.eig_floor,
            num_components_k: 1,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            max_iters: self.train.max_iters,
            tol: self.train.tol,
            seed: self.train.seed,
            cca: self.cca_config(),
        }
    }

    pub fn discourse_config(&self) -> DiscourseConfig {
        DiscourseConfig {
            mode: self.mode,
            dedup_tau: self.dedup_tau,
            cca: self.cca_config(),
            train: self.train_config(),
            hidden_widths: self.train.hidden_widths.clone(),
            activation: self.train.activation,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        let mut ks = self.ks.clone();
        ks.sort_unstable();
        ks.dedup();
        EvalOptions {
            ks,
            best_of: self.best_of,
        }
    }

    pub fn provider(&self) -> Result<EmbeddingProvider> {
        match self.embedding.kind {
            EmbeddingKind::HashedRandom => EmbeddingProvider::hashed(self.embedding.dim_p, self.embedding.seed),
            EmbeddingKind::FileBacked => {
                let path = self.embedding.file.as_deref().expect("validated");
                self.require_file(path, "embedding file")?;
                let p = EmbeddingProvider::from_file(path)?;
                if p.dim_p() != self.embedding.dim_p {
                    return Err(Error::InvalidConfig(format!(
                        "embedding file has p = {}, config says {}",
                        p.dim_p(),
                        self.embedding.dim_p
                    )));
                }
                Ok(p)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let d = RunConfig::default();
        assert_eq!(RunConfig::from_toml_str(&d.to_toml(), &[]).unwrap(), d);
        assert_eq!(RunConfig::from_toml_str("", &[]).unwrap(), d);
    }

    #[test]
    fn overrides() {
        let cfg = RunConfig::from_toml_str(
            "mode = \"dcca\"\n[cca]\nreg_r = 0.5\n",
            &[
                "cca.reg_r=0".into(),
                "ks=[1, 3]".into(),
                "corpus.path=data/x.tsv".into(),
                "train.activation=identity".into(),
                "embedding.dim_p=32".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Dcca);
        assert_eq!(cfg.cca.reg_r, 0.0);
        assert_eq!(cfg.ks, vec![1, 3]);
        assert_eq!(cfg.corpus.path, PathBuf::from("data/x.tsv"));
        assert_eq!(cfg.train.activation, Activation::Identity);
        assert_eq!(cfg.embedding.dim_p, 32);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml_str("bogus = 1", &[]).is_err());
        assert!(RunConfig::from_toml_str("", &["nokey".into()]).is_err());
        let cfg = RunConfig::from_toml_str("", &["embedding.dim_p=1".into()]).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_toml_str("", &["dedup_tau=0".into()]).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_toml_str("", &["embedding.kind=file-backed".into()]).unwrap();
        assert!(cfg.validate().is_err());
    }
}
