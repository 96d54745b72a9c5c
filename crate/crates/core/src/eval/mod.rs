//! Evaluation of externally produced triple scores: triple classification
//! under closed- and open-world labels, filtered link prediction, a rule
//! based predictor and stratified breakdowns.

mod breakdown;
mod metrics;
mod ranking;
mod threshold;

use std::collections::HashMap;
use std::io::BufRead;

use thiserror::Error;

use crate::curate::Label;
use crate::kg::{parse_record, Triple, Vocabulary};

pub use breakdown::{breakdown, write_breakdown_csv, write_breakdown_tsv, Axis, BreakdownItem, BreakdownRow};
pub use metrics::{macro_scores, BinaryMetrics, Confusion, MacroMetrics, OpenConfusion};
pub use ranking::{
    eval_link_prediction, rank_of, rule_predict, Filter, LinkPredictionResult, Query, QueryRank, QueryScorer,
    RuleScorer, ScoreKey, TableScorer,
};
pub use threshold::{
    candidate_thresholds, eval_closed, eval_open, fit_closed, fit_open, fit_pair, fit_single, sensitivity,
    ClosedPolicy, OpenPolicy, Sensitivity,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{count} triples have no score, e.g. {examples}")]
    MissingScores { count: usize, examples: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("gold triple {0} is in the filter set")]
    GoldFiltered(String),
    #[error("triple {0} has no metadata")]
    MissingMetadata(String),
    #[error("cannot fit thresholds on an empty validation set")]
    EmptyValidation,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Model scores keyed by triple; higher means more plausible.
#[derive(Clone, Debug, Default)]
pub struct ScoreTable {
    pub model: String,
    scores: HashMap<Triple, f64>,
}

impl ScoreTable {
    pub fn new(model: impl Into<String>) -> Self {
        Self { model: model.into(), scores: HashMap::new() }
    }

    pub fn insert(&mut self, triple: Triple, score: f64) {
        self.scores.insert(triple, score);
    }

    pub fn get(&self, triple: &Triple) -> Option<f64> {
        self.scores.get(triple).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Reads `head relation tail score` rows. Labels must already be in
    /// `vocab`; scores must be finite.
    pub fn read<R: BufRead>(reader: R, vocab: &Vocabulary, model: impl Into<String>) -> Result<Self, EvalError> {
        let mut table = Self::new(model);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let format = |message: String| EvalError::Format { line: i + 1, message };
            let (triple, score) = line.rsplit_once('\t').ok_or_else(|| format("expected 4 tab-separated fields".into()))?;
            let [h, r, t] = parse_record(triple).map_err(format)?;
            let triple = vocab.resolve(h, r, t).map_err(|e| format(e.to_string()))?;
            let score: f64 = score.trim().parse().map_err(|_| format(format!("score `{score}` is not a number")))?;
            if !score.is_finite() {
                return Err(format(format!("score `{score}` is not finite")));
            }
            table.insert(triple, score);
        }
        Ok(table)
    }

    /// Joins labels with scores; every labeled triple must be scored.
    pub fn attach(
        &self,
        labeled: impl IntoIterator<Item = (Triple, Label)>,
        vocab: &Vocabulary,
    ) -> Result<Vec<Scored>, EvalError> {
        let mut out = Vec::new();
        let mut missing = Vec::new();
        for (triple, label) in labeled {
            match self.get(&triple) {
                Some(score) => out.push(Scored { triple, score, label }),
                None => missing.push(triple),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(missing_scores(&missing, vocab))
        }
    }
}

pub(crate) fn missing_scores(missing: &[Triple], vocab: &Vocabulary) -> EvalError {
    let examples: Vec<String> = missing.iter().take(5).map(|t| vocab.labels(t).join(" ")).collect();
    EvalError::MissingScores { count: missing.len(), examples: examples.join("; ") }
}

/// A labeled triple with its model score.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Scored {
    pub triple: Triple,
    pub score: f64,
    pub label: Label,
}
