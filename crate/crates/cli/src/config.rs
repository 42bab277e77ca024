//! Experiment configuration: a flat `key = value` file with CLI flags
//! layered on top. The effective configuration is snapshotted next to every
//! command's outputs for provenance.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use relex_core::model::{Regime, ReprScheme, Strategy, TrainConfig};

/// A configuration problem the user must fix (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Raw key/value pairs: file contents overlaid with flag values.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(usage(format!(
                    "{} line {}: expected key = value",
                    path.display(),
                    lineno + 1
                )));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(RawConfig { values })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(text) => text
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("config key {key}: cannot parse {text:?}"))),
        }
    }

    /// Apply `key=value` override strings from the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for entry in overrides {
            let Some((key, value)) = entry.split_once('=') else {
                return Err(usage(format!("--set {entry:?}: expected KEY=VALUE")));
            };
            self.set(key.trim(), value.trim());
        }
        Ok(())
    }

    /// Deterministic snapshot of the effective configuration.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.values {
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }
}

/// Shape of the in-process reference encoder, or the identifier of an
/// externally supplied pretrained encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncoderSpec {
    Reference {
        layers: usize,
        heads: usize,
        hidden: usize,
    },
    Pretrained(String),
}

impl EncoderSpec {
    pub fn parse(text: &str) -> Result<Self> {
        if let Some(shape) = text.strip_prefix("reference:") {
            let parts: Vec<&str> = shape.split('x').collect();
            let [layers, heads, hidden] = parts.as_slice() else {
                bail!(usage(format!(
                    "encoder {text:?}: expected reference:<layers>x<heads>x<hidden>"
                )));
            };
            let parse = |s: &str, what: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| usage(format!("encoder {text:?}: bad {what}")))
            };
            return Ok(EncoderSpec::Reference {
                layers: parse(layers, "layer count")?,
                heads: parse(heads, "head count")?,
                hidden: parse(hidden, "hidden size")?,
            });
        }
        Ok(EncoderSpec::Pretrained(text.to_string()))
    }
}

impl fmt::Display for EncoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderSpec::Reference { layers, heads, hidden } => {
                write!(f, "reference:{layers}x{heads}x{hidden}")
            }
            EncoderSpec::Pretrained(id) => f.write_str(id),
        }
    }
}

/// Everything a pipeline command needs: schema, paths, encoder shape,
/// training hyperparameters, and experiment grids.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub schema: String,
    pub corpus_dir: Option<PathBuf>,
    pub eval_corpus_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub bundle_dir: Option<PathBuf>,
    pub predictions_dir: Option<PathBuf>,
    pub encoder: EncoderSpec,
    pub train: TrainConfig,
    pub negative_cap: Option<usize>,
    pub allow_nonstandard: bool,
    pub lowercase: bool,
    pub min_count: usize,
    pub epochs_grid: Option<Vec<usize>>,
    pub batch_grid: Option<Vec<usize>>,
    pub strategy_grid: Vec<Strategy>,
    pub scheme_grid: Vec<ReprScheme>,
    pub regime_grid: Vec<Regime>,
    pub max_csd_grid: Vec<usize>,
}

fn parse_list<T>(raw: &RawConfig, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<Vec<T>>> {
    let Some(text) = raw.get(key) else { return Ok(None) };
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        out.push(parse(item).ok_or_else(|| usage(format!("config key {key}: bad item {item:?}")))?);
    }
    if out.is_empty() {
        return Err(usage(format!("config key {key} lists no values")));
    }
    Ok(Some(out))
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut train = TrainConfig::default();
        if let Some(v) = raw.get("strategy") {
            train.strategy =
                Strategy::parse(v).ok_or_else(|| usage(format!("bad strategy {v:?}")))?;
        }
        if let Some(v) = raw.get("scheme") {
            train.scheme =
                ReprScheme::parse(v).ok_or_else(|| usage(format!("bad scheme {v:?} (use 1-4)")))?;
        }
        if let Some(v) = raw.get("regime") {
            train.regime = Regime::parse(v).ok_or_else(|| usage(format!("bad regime {v:?}")))?;
        }
        if let Some(v) = raw.parsed("learning_rate")? {
            train.learning_rate = v;
        }
        if let Some(v) = raw.parsed("seed")? {
            train.seed = v;
        }
        if let Some(v) = raw.parsed("epochs")? {
            train.epochs = v;
        }
        if let Some(v) = raw.parsed("batch_size")? {
            train.batch_size = v;
        }
        if let Some(v) = raw.parsed("folds")? {
            train.folds = v;
        }
        if let Some(v) = raw.parsed("max_csd")? {
            train.max_csd = v;
        }
        if let Some(v) = raw.parsed("max_len")? {
            train.max_len = v;
        }
        if let Some(v) = raw.parsed("class_weighting")? {
            train.class_weighting = v;
        }
        if let Some(v) = raw.parsed("train_empty_strata")? {
            train.train_empty_strata = v;
        }

        let path_of = |key: &str| raw.get(key).map(PathBuf::from);
        let config = ExperimentConfig {
            schema: raw.get("schema").unwrap_or("n2c2").to_string(),
            corpus_dir: path_of("corpus_dir"),
            eval_corpus_dir: path_of("eval_corpus_dir"),
            output_dir: path_of("output_dir"),
            bundle_dir: path_of("bundle_dir").or_else(|| {
                std::env::var("RELEX_BUNDLE_DIR")
                    .ok()
                    .map(|root| PathBuf::from(root).join("default"))
            }),
            predictions_dir: path_of("predictions_dir"),
            encoder: EncoderSpec::parse(raw.get("encoder").unwrap_or("reference:2x2x64"))?,
            train,
            negative_cap: raw.parsed("negative_cap")?,
            allow_nonstandard: raw.parsed("allow_nonstandard")?.unwrap_or(false),
            lowercase: raw.parsed("lowercase")?.unwrap_or(true),
            min_count: raw.parsed("min_count")?.unwrap_or(1),
            epochs_grid: parse_list(raw, "epochs_grid", |s| s.parse().ok())?,
            batch_grid: parse_list(raw, "batch_grid", |s| s.parse().ok())?,
            strategy_grid: parse_list(raw, "strategy_grid", Strategy::parse)?
                .unwrap_or_else(|| vec![train_strategy(raw)]),
            scheme_grid: parse_list(raw, "scheme_grid", ReprScheme::parse)?
                .unwrap_or_else(|| vec![train_scheme(raw)]),
            regime_grid: parse_list(raw, "regime_grid", Regime::parse)?
                .unwrap_or_else(|| vec![train_regime(raw)]),
            max_csd_grid: parse_list(raw, "max_csd_grid", |s| s.parse().ok())?
                .unwrap_or_else(|| vec![train_max_csd(raw)]),
        };

        config
            .train
            .validate(config.allow_nonstandard)
            .map_err(|e| usage(format!("{e} (pass --allow-nonstandard to override)")))?;
        Ok(config)
    }

    pub fn require_corpus_dir(&self) -> Result<&Path> {
        self.corpus_dir
            .as_deref()
            .ok_or_else(|| usage("corpus_dir is required (flag --corpus-dir or config key)"))
    }

    pub fn require_output_dir(&self) -> Result<&Path> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| usage("output_dir is required (flag --output-dir or config key)"))
    }

    pub fn require_bundle_dir(&self) -> Result<&Path> {
        self.bundle_dir.as_deref().ok_or_else(|| {
            usage("bundle_dir is required (flag --bundle-dir, config key, or RELEX_BUNDLE_DIR)")
        })
    }
}

fn train_strategy(raw: &RawConfig) -> Strategy {
    raw.get("strategy")
        .and_then(Strategy::parse)
        .unwrap_or(TrainConfig::default().strategy)
}

fn train_scheme(raw: &RawConfig) -> ReprScheme {
    raw.get("scheme")
        .and_then(ReprScheme::parse)
        .unwrap_or(TrainConfig::default().scheme)
}

fn train_regime(raw: &RawConfig) -> Regime {
    raw.get("regime")
        .and_then(Regime::parse)
        .unwrap_or(TrainConfig::default().regime)
}

fn train_max_csd(raw: &RawConfig) -> usize {
    raw.get("max_csd")
        .and_then(|s| s.parse().ok())
        .unwrap_or(TrainConfig::default().max_csd)
}

/// Load the schema named (or stored at) `spec`.
pub fn resolve_schema(spec: &str) -> Result<relex_core::schema::RelationSchema> {
    match relex_core::schema::builtin_schema(spec) {
        Ok(schema) => Ok(schema),
        Err(relex_core::schema::SchemaError::UnknownSchema(_)) if Path::new(spec).exists() => {
            let text = std::fs::read_to_string(spec)
                .with_context(|| format!("reading schema file {spec}"))?;
            let name = Path::new(spec)
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("custom");
            Ok(relex_core::schema::load_schema_named(&text, name)?)
        }
        Err(e) => Err(anyhow!(e)),
    }
}
