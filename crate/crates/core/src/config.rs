//! Run configuration: one TOML document covering every stage, with dotted
//! `key=value` overrides and a content fingerprint.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SbmConfig;
use crate::deepwalk::DeepWalkConfig;
use crate::error::{Error, Result};
use crate::finetune::{FinetuneConfig, InitMode};
use crate::pretrain::PretrainConfig;
use crate::refine::{CandidateStrategy, NormMode, RefineConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Manifest path, dataset directory, or a name under `$GSR_DATA_DIR`.
    pub source: Option<String>,
    /// Generate a stochastic block model instead of loading files.
    pub sbm: Option<SbmConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    /// Feature-view weight; the structure view gets `1 - beta_f`.
    pub beta_f: f64,
    pub norm_mode: NormMode,
    pub candidates: CandidateStrategy,
    /// Edges added, as a fraction of the observed edge count.
    pub add_ratio: f64,
    /// Edges removed, as a fraction of the observed edge count.
    pub remove_ratio: f64,
    /// Exact counts; take precedence over the ratios.
    pub m_plus: Option<usize>,
    pub m_minus: Option<usize>,
}

impl Default for RefineSection {
    fn default() -> Self {
        Self {
            beta_f: 0.5,
            norm_mode: NormMode::Minmax,
            candidates: CandidateStrategy::Auto,
            add_ratio: 0.25,
            remove_ratio: 0.0,
            m_plus: None,
            m_minus: None,
        }
    }
}

impl RefineSection {
    pub fn counts(&self, num_edges: usize) -> (usize, usize) {
        let of = |r: f64| (r * num_edges as f64).round() as usize;
        (
            self.m_plus.unwrap_or_else(|| of(self.add_ratio)),
            self.m_minus.unwrap_or_else(|| of(self.remove_ratio)),
        )
    }

    pub fn resolve(&self, num_edges: usize) -> RefineConfig {
        let (m_plus, m_minus) = self.counts(num_edges);
        RefineConfig {
            weights: vec![self.beta_f, 1.0 - self.beta_f],
            norm_mode: self.norm_mode,
            candidates: self.candidates,
            m_plus,
            m_minus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub init: InitMode,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        let f = FinetuneConfig::default();
        Self {
            init: InitMode::Transfer,
            lr: f.lr,
            weight_decay: f.weight_decay,
            dropout: f.dropout,
            max_epochs: f.max_epochs,
            patience: f.patience,
        }
    }
}

impl FinetuneSection {
    pub fn training(&self) -> FinetuneConfig {
        FinetuneConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            max_epochs: self.max_epochs,
            patience: self.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Parallel seed/grid jobs; results do not depend on it.
    pub jobs: usize,
    pub dataset: DatasetSection,
    pub deepwalk: DeepWalkConfig,
    pub pretrain: PretrainConfig,
    pub refine: RefineSection,
    pub finetune: FinetuneSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: PathBuf::from("results"),
            jobs: 1,
            dataset: DatasetSection::default(),
            deepwalk: DeepWalkConfig::default(),
            pretrain: PretrainConfig::default(),
            refine: RefineSection::default(),
            finetune: FinetuneSection::default(),
        }
    }
}

/// Parses `a.b.c=value`; the value is read as a TOML value, falling back to
/// a bare string.
pub fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override {spec:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::InvalidConfig(format!("override {spec:?} has an empty key segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path, value))
}

fn set_path(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("{p} is not a section")))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            set_path(&mut table, &path, value)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, overrides).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::format(path, m),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every documented range before any compute happens.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.dataset.source.is_some() && self.dataset.sbm.is_some() {
            return Err(Error::InvalidConfig("dataset.source and dataset.sbm are mutually exclusive".into()));
        }
        self.deepwalk.validate()?;
        self.pretrain.validate()?;
        self.finetune.training().validate()?;
        let r = &self.refine;
        if !(0.0..=1.0).contains(&r.beta_f) {
            return Err(Error::InvalidConfig(format!("refine.beta_f must be in [0, 1], got {}", r.beta_f)));
        }
        if !(0.0..=1.0).contains(&r.add_ratio) {
            return Err(Error::InvalidConfig(format!("refine.add_ratio must be in [0, 1], got {}", r.add_ratio)));
        }
        if !(0.0..=1.0).contains(&r.remove_ratio) {
            return Err(Error::InvalidConfig(format!(
                "refine.remove_ratio must be in [0, 1], got {}",
                r.remove_ratio
            )));
        }
        self.refine.resolve(0).validate(2)
    }

    /// SHA-256 of the canonical JSON form, excluding where results go and how
    /// many jobs compute them.
    pub fn fingerprint(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("out_dir");
            o.remove("jobs");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}
