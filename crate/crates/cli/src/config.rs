//! Flat `key=value` pipeline configuration. Later assignments win, so flag
//! overrides are applied after the file.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use inferkg_core::curate::{DEFAULT_DENSE_THRESHOLD, DEFAULT_EXCLUSIVITY};
use inferkg_core::rules::{MineBudget, MAX_RULE_HOPS};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

fn field_err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.to_owned(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub mining_corpus: Option<PathBuf>,
    pub dataset_corpus: Option<PathBuf>,
    /// Graph that decides kg-auto positives; defaults to the dataset corpus.
    pub reference_corpus: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Exported annotation labels applied to unresolved candidates.
    pub human_labels: Option<PathBuf>,
    pub lenient: bool,
    pub mining_top_entities: Option<usize>,
    pub mining_top_relations: Option<usize>,
    pub dataset_top_entities: Option<usize>,
    pub dataset_top_relations: Option<usize>,
    pub relation_blacklist: Vec<String>,
    pub lambda_min: f64,
    /// `None` disables the dense sibling bundle.
    pub dense_lambda: Option<f64>,
    pub exclusivity: f64,
    pub mining_budget: MineBudget,
    pub max_rule_hops: usize,
    pub min_support: u64,
    pub grounding_cap: usize,
    pub max_extra_hops: usize,
    pub extend_fraction: f64,
    pub balance_max_share: f64,
    pub hop_parity_share: f64,
    pub parity_tolerance: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mining_corpus: None,
            dataset_corpus: None,
            reference_corpus: None,
            output_dir: PathBuf::from("out"),
            human_labels: None,
            lenient: false,
            mining_top_entities: None,
            mining_top_relations: None,
            dataset_top_entities: None,
            dataset_top_relations: None,
            relation_blacklist: Vec::new(),
            lambda_min: 0.1,
            dense_lambda: Some(DEFAULT_DENSE_THRESHOLD),
            exclusivity: DEFAULT_EXCLUSIVITY,
            mining_budget: MineBudget::Seconds(500.0),
            max_rule_hops: 3,
            min_support: 2,
            grounding_cap: 100_000,
            max_extra_hops: 5,
            extend_fraction: 0.15,
            balance_max_share: 0.4,
            hop_parity_share: 0.6,
            parity_tolerance: 0.1,
            seed: 42,
            threads: 1,
        }
    }
}

pub const KEYS: [&str; 25] = [
    "mining_corpus",
    "dataset_corpus",
    "reference_corpus",
    "output_dir",
    "human_labels",
    "lenient",
    "mining_top_entities",
    "mining_top_relations",
    "dataset_top_entities",
    "dataset_top_relations",
    "relation_blacklist",
    "lambda_min",
    "dense_lambda",
    "exclusivity",
    "mining_budget",
    "max_rule_hops",
    "min_support",
    "grounding_cap",
    "max_extra_hops",
    "extend_fraction",
    "balance_max_share",
    "hop_parity_share",
    "parity_tolerance",
    "seed",
    "threads",
];

/// `500s`, `2.5s` or `100000it`.
pub fn parse_budget(value: &str) -> Result<MineBudget, String> {
    let value = value.trim();
    if let Some(n) = value.strip_suffix("it") {
        let n: u64 = n.trim().parse().map_err(|_| format!("`{value}` is not an iteration count"))?;
        return Ok(MineBudget::Iterations(n));
    }
    let secs = value.strip_suffix('s').unwrap_or(value);
    let secs: f64 = secs.trim().parse().map_err(|_| format!("`{value}` is neither `<seconds>s` nor `<count>it`"))?;
    Ok(MineBudget::Seconds(secs))
}

fn format_budget(budget: MineBudget) -> String {
    match budget {
        MineBudget::Seconds(s) => format!("{s}s"),
        MineBudget::Iterations(n) => format!("{n}it"),
    }
}

fn optional(value: &str) -> Option<&str> {
    let v = value.trim();
    (!v.is_empty() && v != "none").then_some(v)
}

fn number<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| field_err(field, format!("`{value}` is not a valid number")))
}

fn optional_number<T: std::str::FromStr>(field: &str, value: &str) -> Result<Option<T>, ConfigError> {
    optional(value).map(|v| number(field, v)).transpose()
}

fn fraction(field: &str, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(field_err(field, format!("must be in (0, 1], got {value}")))
    }
}

fn positive<T: PartialOrd + Default + fmt::Display>(field: &str, value: T) -> Result<(), ConfigError> {
    if value > T::default() {
        Ok(())
    } else {
        Err(field_err(field, format!("must be positive, got {value}")))
    }
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let path = |v: &str| optional(v).map(PathBuf::from);
        match key {
            "mining_corpus" => self.mining_corpus = path(value),
            "dataset_corpus" => self.dataset_corpus = path(value),
            "reference_corpus" => self.reference_corpus = path(value),
            "human_labels" => self.human_labels = path(value),
            "output_dir" => self.output_dir = path(value).ok_or_else(|| field_err(key, "must not be empty"))?,
            "lenient" => {
                self.lenient = value.trim().parse().map_err(|_| field_err(key, format!("`{value}` is not true or false")))?
            }
            "mining_top_entities" => self.mining_top_entities = optional_number(key, value)?,
            "mining_top_relations" => self.mining_top_relations = optional_number(key, value)?,
            "dataset_top_entities" => self.dataset_top_entities = optional_number(key, value)?,
            "dataset_top_relations" => self.dataset_top_relations = optional_number(key, value)?,
            "relation_blacklist" => {
                self.relation_blacklist =
                    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect()
            }
            "lambda_min" => self.lambda_min = number(key, value)?,
            "dense_lambda" => self.dense_lambda = optional_number(key, value)?,
            "exclusivity" => self.exclusivity = number(key, value)?,
            "mining_budget" => self.mining_budget = parse_budget(value).map_err(|m| field_err(key, m))?,
            "max_rule_hops" => self.max_rule_hops = number(key, value)?,
            "min_support" => self.min_support = number(key, value)?,
            "grounding_cap" => self.grounding_cap = number(key, value)?,
            "max_extra_hops" => self.max_extra_hops = number(key, value)?,
            "extend_fraction" => self.extend_fraction = number(key, value)?,
            "balance_max_share" => self.balance_max_share = number(key, value)?,
            "hop_parity_share" => self.hop_parity_share = number(key, value)?,
            "parity_tolerance" => self.parity_tolerance = number(key, value)?,
            "seed" => self.seed = number(key, value)?,
            "threads" => self.threads = number(key, value)?,
            _ => return Err(field_err(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split_once('#').map_or(line, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, message: format!("expected key=value, got `{line}`") })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fraction("lambda_min", self.lambda_min)?;
        if let Some(d) = self.dense_lambda {
            fraction("dense_lambda", d)?;
        }
        fraction("extend_fraction", self.extend_fraction)?;
        fraction("balance_max_share", self.balance_max_share)?;
        fraction("hop_parity_share", self.hop_parity_share)?;
        fraction("parity_tolerance", self.parity_tolerance)?;
        if !(self.exclusivity.is_finite() && self.exclusivity >= 1.0) {
            return Err(field_err("exclusivity", format!("must be a finite ratio >= 1, got {}", self.exclusivity)));
        }
        match self.mining_budget {
            MineBudget::Seconds(s) if !(s.is_finite() && s > 0.0) => {
                return Err(field_err("mining_budget", format!("must be positive, got {s}s")))
            }
            MineBudget::Iterations(0) => return Err(field_err("mining_budget", "must be positive, got 0it")),
            _ => {}
        }
        if !(1..=MAX_RULE_HOPS).contains(&self.max_rule_hops) {
            return Err(field_err("max_rule_hops", format!("must be within 1..={MAX_RULE_HOPS}, got {}", self.max_rule_hops)));
        }
        positive("min_support", self.min_support)?;
        positive("grounding_cap", self.grounding_cap)?;
        positive("seed", self.seed)?;
        positive("threads", self.threads)?;
        for (field, v) in [
            ("mining_top_entities", self.mining_top_entities),
            ("mining_top_relations", self.mining_top_relations),
            ("dataset_top_entities", self.dataset_top_entities),
            ("dataset_top_relations", self.dataset_top_relations),
        ] {
            if let Some(v) = v {
                positive(field, v)?;
            }
        }
        Ok(())
    }

    /// Every key with its effective value, in `KEYS` order.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(|| "none".to_owned(), |p| p.display().to_string());
        let count = |c: Option<usize>| c.map_or_else(|| "none".to_owned(), |c| c.to_string());
        let values = [
            path(&self.mining_corpus),
            path(&self.dataset_corpus),
            path(&self.reference_corpus),
            self.output_dir.display().to_string(),
            path(&self.human_labels),
            self.lenient.to_string(),
            count(self.mining_top_entities),
            count(self.mining_top_relations),
            count(self.dataset_top_entities),
            count(self.dataset_top_relations),
            self.relation_blacklist.join(","),
            self.lambda_min.to_string(),
            self.dense_lambda.map_or_else(|| "none".to_owned(), |d| d.to_string()),
            self.exclusivity.to_string(),
            format_budget(self.mining_budget),
            self.max_rule_hops.to_string(),
            self.min_support.to_string(),
            self.grounding_cap.to_string(),
            self.max_extra_hops.to_string(),
            self.extend_fraction.to_string(),
            self.balance_max_share.to_string(),
            self.hop_parity_share.to_string(),
            self.parity_tolerance.to_string(),
            self.seed.to_string(),
            self.threads.to_string(),
        ];
        KEYS.into_iter().zip(values).collect()
    }

    /// Canonical `key=value` text; re-reading it gives the same config.
    pub fn to_text(&self) -> String {
        let entries = self.entries();
        KEYS.iter().fold(String::new(), |mut out, k| {
            let _ = writeln!(out, "{k}={}", entries[k]);
            out
        })
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_text().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
