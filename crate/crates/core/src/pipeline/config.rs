//! Pipeline configuration.
//!
//! A config file holds `key = value` lines; `#` starts a comment line. Command
//! line flags are applied afterwards through [`PipelineConfig::set`], so they
//! override the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::classify::{Algo, Hyper, TrainParams};
use crate::embed::{EmbeddingProvider, ProviderKind};
use crate::labels::{ClosedFilter, DEFAULT_MIN_COUNT};
use crate::lang::{TokenGate, DEFAULT_LANG_THRESHOLD};
use crate::seed::derive_seed;
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Directory holding every stage artifact unless a path is set explicitly.
    pub out_dir: PathBuf,
    pub raw: Option<PathBuf>,
    pub max_records: Option<usize>,
    pub min_count: u64,
    pub closed_filter: ClosedFilter,
    pub patterns: Option<PathBuf>,
    pub emit_stats: Option<PathBuf>,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub lang_threshold: f64,
    pub provider: ProviderKind,
    pub dim: Option<usize>,
    pub idf: bool,
    pub external_vectors: Option<PathBuf>,
    pub verify_unit_norm: bool,
    pub algo: Algo,
    /// Hyperparameter overrides applied on top of the algorithm defaults.
    pub hyper: BTreeMap<String, String>,
    pub balance_target: Option<usize>,
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
    pub threads: Option<usize>,
    pub timestamp: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            out_dir: PathBuf::from("qlabel-out"),
            raw: None,
            max_records: None,
            min_count: DEFAULT_MIN_COUNT,
            closed_filter: ClosedFilter::default(),
            patterns: None,
            emit_stats: None,
            min_tokens: 6,
            max_tokens: 199,
            lang_threshold: DEFAULT_LANG_THRESHOLD,
            provider: ProviderKind::Hashed,
            dim: None,
            idf: false,
            external_vectors: None,
            verify_unit_norm: false,
            algo: Algo::Logreg,
            hyper: BTreeMap::new(),
            balance_target: None,
            train_fraction: 0.7,
            stratified: true,
            seed: DEFAULT_SEED,
            threads: None,
            timestamp: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("config key `{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::invalid(format!("config key `{key}`: expected on/off, got `{value}`"))),
    }
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_str(&text)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::invalid(format!("line {}: expected `key = value`", n + 1)));
            };
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::invalid(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Set one key. Keys match the config file; `hyper.<name>` sets a
    /// hyperparameter of the selected algorithm.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(h) = key.strip_prefix("hyper.") {
            self.hyper.insert(h.to_string(), value.to_string());
            return Ok(());
        }
        match key {
            "out_dir" => self.out_dir = PathBuf::from(value),
            "raw" | "input" => self.raw = Some(PathBuf::from(value)),
            "max_records" => self.max_records = optional(key, value)?,
            "min_count" => self.min_count = parse(key, value)?,
            "closed_filter" => self.closed_filter = value.parse()?,
            "patterns" => self.patterns = optional(key, value)?,
            "emit_stats" => self.emit_stats = optional(key, value)?,
            "min_tokens" => self.min_tokens = parse(key, value)?,
            "max_tokens" => self.max_tokens = parse(key, value)?,
            "lang_threshold" => self.lang_threshold = parse(key, value)?,
            "provider" => self.provider = value.parse()?,
            "dim" => self.dim = optional(key, value)?,
            "idf" => self.idf = parse_bool(key, value)?,
            "external_vectors" => self.external_vectors = optional(key, value)?,
            "verify_unit_norm" => self.verify_unit_norm = parse_bool(key, value)?,
            "algo" => self.algo = value.parse()?,
            "balance_target" => self.balance_target = optional(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "split" => {
                self.stratified = match value {
                    "stratified" => true,
                    "uniform" => false,
                    _ => return Err(Error::invalid(format!("split must be stratified or uniform, got `{value}`"))),
                }
            }
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = optional(key, value)?,
            "timestamp" => self.timestamp = parse_bool(key, value)?,
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_count == 0 {
            return Err(Error::invalid("min_count must be at least 1"));
        }
        TokenGate::new(self.min_tokens, self.max_tokens)?;
        if !(0.0..=1.0).contains(&self.lang_threshold) {
            return Err(Error::invalid("lang_threshold must lie in [0, 1]"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction must lie strictly between 0 and 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be positive"));
        }
        self.provider()?;
        self.train_params()?;
        Ok(())
    }

    pub fn token_gate(&self) -> Result<TokenGate> {
        TokenGate::new(self.min_tokens, self.max_tokens)
    }

    pub fn provider(&self) -> Result<EmbeddingProvider> {
        if self.provider != ProviderKind::Hashed && self.idf {
            return Err(Error::invalid("idf weighting only applies to the hashed provider"));
        }
        EmbeddingProvider::new(self.provider, self.dim)
    }

    pub fn train_params(&self) -> Result<TrainParams> {
        let mut hyper = Hyper::defaults(self.algo);
        for (k, v) in &self.hyper {
            hyper.set(k, v)?;
        }
        hyper.validate()?;
        Ok(TrainParams {
            seed: self.stage_seed("train"),
            hyper,
        })
    }

    /// Seed for one stage, derived from the master seed and the stage key.
    pub fn stage_seed(&self, key: &str) -> u64 {
        derive_seed(self.seed, key)
    }

    fn path_or(&self, explicit: Option<&PathBuf>, name: &str) -> PathBuf {
        explicit.cloned().unwrap_or_else(|| self.out_dir.join(name))
    }

    pub fn labeled_path(&self) -> PathBuf {
        self.out_dir.join("labeled.jsonl")
    }

    pub fn lexicon_dir(&self) -> PathBuf {
        self.out_dir.join("labels")
    }

    pub fn prepare_summary_path(&self) -> PathBuf {
        self.out_dir.join("prepare_summary.json")
    }

    pub fn cleaned_path(&self) -> PathBuf {
        self.out_dir.join("cleaned.jsonl")
    }

    pub fn stats_path(&self) -> PathBuf {
        self.path_or(self.emit_stats.as_ref(), "clean_stats.csv")
    }

    pub fn filtered_path(&self) -> PathBuf {
        self.out_dir.join("filtered.jsonl")
    }

    pub fn vectors_path(&self) -> PathBuf {
        self.out_dir.join("vectors.csv")
    }

    pub fn model_path(&self) -> PathBuf {
        self.out_dir.join("model.json")
    }

    pub fn report_path(&self) -> PathBuf {
        self.out_dir.join("report.json")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join("manifest.jsonl")
    }

    pub fn timings_path(&self) -> PathBuf {
        self.out_dir.join("timings.jsonl")
    }

    /// Settings that influence artifact contents, as sorted `key = value` pairs.
    /// Paths and the thread count are left out: they never change results.
    pub fn canonical(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("max_records", self.max_records.map_or("none".into(), |v| v.to_string()));
        put("min_count", self.min_count.to_string());
        put("closed_filter", self.closed_filter.to_string());
        put("min_tokens", self.min_tokens.to_string());
        put("max_tokens", self.max_tokens.to_string());
        put("lang_threshold", self.lang_threshold.to_string());
        put("provider", self.provider.to_string());
        put("dim", self.dim.map_or("none".into(), |v| v.to_string()));
        put("idf", self.idf.to_string());
        put("verify_unit_norm", self.verify_unit_norm.to_string());
        put("algo", self.algo.to_string());
        for (k, v) in &self.hyper {
            put(&format!("hyper.{k}"), v.clone());
        }
        put("balance_target", self.balance_target.map_or("none".into(), |v| v.to_string()));
        put("train_fraction", self.train_fraction.to_string());
        put("split", if self.stratified { "stratified" } else { "uniform" }.into());
        put("seed", self.seed.to_string());
        put("timestamp", self.timestamp.to_string());
        m
    }
}
