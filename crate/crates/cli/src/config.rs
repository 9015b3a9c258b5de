//! The run configuration document and command-line overrides.
//!
//! A run is described by one TOML file with the sections `[run]`, `[train]`,
//! `[model]`, `[data]` and `[eval]`. Every key has a default, so an empty
//! file is a valid configuration; unknown keys are rejected. Any key can be
//! overridden from the command line with `--set section.key=value`, where
//! `value` is parsed as a TOML value and falls back to a bare string.

use std::path::{Path, PathBuf};

use lightcon::data::CifarAugment;
use lightcon::losses::AlphaSchedule;
use lightcon::{KnnConfig, LossKind, NetworkSpec, Precision, ProbeConfig, SynthConfig, TrainPlan};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub train: TrainPlan,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Prefix of the run id; the rest is a hash of the whole configuration.
    pub name: String,
    pub precision: Precision,
    /// Write `epoch-NNNN.ckpt` every this many epochs; 0 keeps only the
    /// final checkpoint.
    pub checkpoint_every: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            name: "lightcon".into(),
            precision: Precision::Single,
            checkpoint_every: 10,
        }
    }
}

/// Backbone and projector widths. The input width comes from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub projector_hidden: usize,
    pub embed_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![512, 256],
            feature_dim: 128,
            projector_hidden: 256,
            embed_dim: 64,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, input_dim: usize) -> lightcon::Result<NetworkSpec> {
        let mut encoder = Vec::with_capacity(self.encoder_hidden.len() + 2);
        encoder.push(input_dim);
        encoder.extend(&self.encoder_hidden);
        encoder.push(self.feature_dim);
        NetworkSpec::new(encoder, self.projector_hidden, self.embed_dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synth,
    Cifar,
    Dump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Seed of the synthetic generator.
    pub seed: u64,
    pub synth: SynthConfig,
    /// Directory holding `data_batch_{1..5}.bin` and `test_batch.bin`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cifar_dir: Option<PathBuf>,
    pub augment: CifarAugment,
    /// File written by `lightcon synth-dump`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Knn,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub protocol: Protocol,
    pub knn: KnnConfig,
    pub probe: ProbeConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let table: Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        Self::from_table(table)
    }

    fn from_table(table: Table) -> Result<Self, CliError> {
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from the defaults) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        overrides.apply(&mut table)?;
        Self::from_table(table)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.train.validate()?;
        self.data.synth.validate()?;
        if self.eval.knn.k == 0 {
            return bad("eval.knn.k must be positive".into());
        }
        self.eval.probe.validate()?;
        self.model.spec(1)?;
        // TOML integers are signed 64-bit
        for (name, v) in [
            ("train.seed", self.train.seed),
            ("data.seed", self.data.seed),
            ("eval.probe.seed", self.eval.probe.seed),
        ] {
            if v > i64::MAX as u64 {
                return bad(format!("{name} = {v} does not fit a TOML integer"));
            }
        }
        match self.data.source {
            DataSource::Cifar if self.data.cifar_dir.is_none() => {
                bad("data.source = \"cifar\" needs data.cifar_dir".into())
            }
            DataSource::Dump if self.data.dump_path.is_none() => {
                bad("data.source = \"dump\" needs data.dump_path".into())
            }
            _ => Ok(()),
        }
    }

    /// Hex SHA-256 of the serialized configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_id(&self) -> String {
        format!("{}-{}", self.run.name, &self.hash()[..12])
    }
}

/// Dotted-path assignments applied to the raw document before it is
/// decoded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides(Vec<(String, Value)>);

impl Overrides {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `path=value`.
    pub fn push_assignment(&mut self, assignment: &str) -> Result<(), CliError> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
        let path = path.trim();
        if path.is_empty() || path.split('.').any(str::is_empty) {
            return Err(CliError::Config(format!("bad override key `{path}`")));
        }
        self.0.push((path.to_string(), parse_value(raw.trim())));
        Ok(())
    }

    pub fn set(&mut self, path: &str, value: impl Into<Value>) {
        self.0.push((path.to_string(), value.into()));
    }

    pub fn epochs(&mut self, epochs: u64) -> Result<(), CliError> {
        let v = i64::try_from(epochs).map_err(|_| CliError::Config(format!("epochs {epochs} out of range")))?;
        self.set("train.total_epochs", v);
        Ok(())
    }

    pub fn alpha(&mut self, alpha: f64) {
        let schedule = Value::try_from(AlphaSchedule::Static { alpha }).expect("alpha schedule is a table");
        self.set("train.smoothing.alpha", schedule);
    }

    pub fn loss(&mut self, loss: LossKind) {
        let name = Value::try_from(loss).expect("loss kind is a string");
        self.set("train.loss", name);
    }

    fn apply(&self, table: &mut Table) -> Result<(), CliError> {
        for (path, value) in &self.0 {
            let mut keys: Vec<&str> = path.split('.').collect();
            let last = keys.pop().expect("validated non-empty path");
            let mut node = &mut *table;
            for key in keys {
                let entry = node.entry(key).or_insert_with(|| Value::Table(Table::new()));
                node = entry
                    .as_table_mut()
                    .ok_or_else(|| CliError::Config(format!("`{key}` in `{path}` is not a section")))?;
            }
            node.insert(last.to_string(), value.clone());
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
