//! Run configuration: built-in defaults, an optional preset, a TOML file and
//! dotted `key=value` overrides, merged in that order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::corpus::{CurrencyPairSpec, SyntheticConfig};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::extraction::TopK;
use crate::features::{SplitSpec, WindowSpec};
use crate::grouping::ap::APConfig;
use crate::model::{ModelSpec, Variant};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Small encoder that trains on a laptop CPU.
    #[default]
    Desk,
    /// Full-size encoder (12 layers, 768 hidden). Recorded for reference.
    Paper,
}

/// Where each stage reads its inputs. Relative paths resolve against the
/// working directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory holding `news.jsonl` and `trades.csv` (output of `generate`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<PathBuf>,
    /// Overrides `raw/news.jsonl`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub news: Option<PathBuf>,
    /// Overrides `raw/trades.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trades: Option<PathBuf>,
    /// Output directory of `preprocess`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prepared: Option<PathBuf>,
    /// Output directory of `train`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupingConfig {
    /// Bucket width in minutes for time grouping.
    pub time_unit: i64,
    pub ap: APConfig,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            time_unit: 5,
            ap: APConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Dev,
    #[default]
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: SplitName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    #[default]
    Time,
    K,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub input_minutes: Vec<usize>,
    pub delay_minutes: Vec<usize>,
    pub k: Vec<TopK>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            kind: SweepKind::Time,
            input_minutes: vec![10, 20, 30, 40, 50, 60],
            delay_minutes: vec![5, 10, 15, 20, 25, 30],
            k: vec![
                TopK::Top(1),
                TopK::Top(2),
                TopK::Top(3),
                TopK::Top(4),
                TopK::Top(5),
                TopK::All,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub preset: Preset,
    pub pair: CurrencyPairSpec,
    pub data: DataConfig,
    pub generator: SyntheticConfig,
    pub window: WindowSpec,
    pub split: SplitSpec,
    pub encoder: EncoderConfig,
    pub grouping: GroupingConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

/// Tables replaced wholesale instead of merged, so a file can switch enum
/// variants (e.g. `split.counts` instead of the default `split.fractions`).
const REPLACE: &[&str] = &["split"];

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.pair.validate()?;
        self.generator.validate()?;
        self.window.validate()?;
        self.encoder.validate()?;
        self.grouping.ap.validate()?;
        self.train.validate()?;
        if self.grouping.time_unit <= 0 {
            return Err(Error::Config("grouping.time_unit must be positive".into()));
        }
        if self.sweep.input_minutes.is_empty()
            || self.sweep.delay_minutes.is_empty()
            || self.sweep.k.is_empty()
        {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        Ok(())
    }

    /// Defaults ← preset ← `path` ← `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let file = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config file {}: {e}", p.display()))
                })?;
                text.parse::<Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        let mut layer = file;
        for o in overrides {
            let (key, value) = parse_override(o)?;
            set_dotted(&mut layer, &key, value)?;
        }
        Self::from_layers(layer)
    }

    /// Defaults ← preset ← `layer`.
    pub fn from_layers(layer: Table) -> Result<Config> {
        let preset: Preset = match layer.get("preset") {
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e| Error::Config(format!("preset: {e}")))?,
            None => Preset::Desk,
        };
        let mut base = Config::default();
        if preset == Preset::Paper {
            base.preset = Preset::Paper;
            base.encoder = EncoderConfig::large();
        }
        let mut merged = to_table(&base)?;
        merge(&mut merged, layer, 0);
        let cfg: Config = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn model_spec(&self, feature_dim: usize, vocab_size: usize) -> ModelSpec {
        ModelSpec {
            encoder: self.encoder.clone(),
            variant: self.train.variant,
            grouping: self.train.grouping,
            k: self.train.k,
            time_unit: self.grouping.time_unit,
            ap: self.grouping.ap,
            feature_dim,
            vocab_size,
        }
    }

    pub fn news_path(&self) -> Option<PathBuf> {
        self.data
            .news
            .clone()
            .or_else(|| self.data.raw.as_ref().map(|r| r.join("news.jsonl")))
    }

    pub fn trades_path(&self) -> Option<PathBuf> {
        self.data
            .trades
            .clone()
            .or_else(|| self.data.raw.as_ref().map(|r| r.join("trades.csv")))
    }

    pub fn uses_news(&self) -> bool {
        self.train.variant != Variant::NoNews
    }
}

fn to_table(cfg: &Config) -> Result<Table> {
    match Value::try_from(cfg).map_err(|e| Error::Serde(e.to_string()))? {
        Value::Table(t) => Ok(t),
        _ => unreachable!("config serializes to a table"),
    }
}

fn merge(base: &mut Table, layer: Table, depth: usize) {
    for (k, v) in layer {
        let replace = depth == 0 && REPLACE.contains(&k.as_str());
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) if !replace => merge(b, t, depth + 1),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Splits `a.b.c=value`. The value is read as a TOML literal when possible,
/// then as a comma-separated list, and otherwise kept as a bare string.
pub fn parse_override(text: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {text:?} is not key=value")))?;
    let key: Vec<String> = key
        .trim()
        .split('.')
        .map(|s| s.trim().to_string())
        .collect();
    if key.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!(
            "override {text:?} has an empty key segment"
        )));
    }
    let raw = raw.trim();
    let value = literal(raw).unwrap_or_else(|| {
        if raw.contains(',') {
            Value::Array(
                raw.split(',')
                    .map(|s| {
                        literal(s.trim()).unwrap_or_else(|| Value::String(s.trim().to_string()))
                    })
                    .collect(),
            )
        } else {
            Value::String(raw.to_string())
        }
    });
    Ok((key, value))
}

fn literal(raw: &str) -> Option<Value> {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
}

fn set_dotted(table: &mut Table, key: &[String], value: Value) -> Result<()> {
    let (last, path) = key.split_last().expect("non-empty key");
    let mut cur = table;
    for seg in path {
        let entry = cur
            .entry(seg.clone())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(Error::Config(format!(
                    "override key {} crosses a non-table value",
                    key.join(".")
                )))
            }
        };
    }
    cur.insert(last.clone(), value);
    Ok(())
}
