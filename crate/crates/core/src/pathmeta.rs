//! JSON-lines sidecar holding the supporting paths of each candidate.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Triple, Vocabulary};
use crate::rules::RuleId;
use crate::split::{GroundedPath, Pattern};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathEntry {
    pub premises: Vec<[String; 3]>,
    pub rules: Vec<u32>,
    pub confidence: f64,
    pub hops: usize,
    pub pattern: Pattern,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRecord {
    pub conclusion: [String; 3],
    pub paths: Vec<PathEntry>,
}

#[derive(Debug, Error)]
pub enum PathMetaError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn labels(vocab: &Vocabulary, t: &Triple) -> [String; 3] {
    vocab.labels(t).map(str::to_owned)
}

impl PathRecord {
    pub fn from_paths(conclusion: &Triple, paths: &[GroundedPath], vocab: &Vocabulary) -> Self {
        Self {
            conclusion: labels(vocab, conclusion),
            paths: paths
                .iter()
                .map(|p| PathEntry {
                    premises: p.premises.iter().map(|t| labels(vocab, t)).collect(),
                    rules: p.rules_used.iter().map(|r| r.0).collect(),
                    confidence: p.confidence,
                    hops: p.hops,
                    pattern: p.pattern,
                })
                .collect(),
        }
    }

    pub fn into_paths(self, vocab: &mut Vocabulary) -> Result<(Triple, Vec<GroundedPath>), String> {
        let [h, r, t] = &self.conclusion;
        let conclusion = vocab.intern_triple(h, r, t);
        let mut out = Vec::with_capacity(self.paths.len());
        for entry in self.paths {
            if entry.hops != entry.premises.len() {
                return Err(format!("hops {} but {} premises", entry.hops, entry.premises.len()));
            }
            if !(entry.confidence > 0.0 && entry.confidence <= 1.0) {
                return Err(format!("confidence {} outside (0, 1]", entry.confidence));
            }
            out.push(GroundedPath {
                conclusion,
                premises: entry.premises.iter().map(|[h, r, t]| vocab.intern_triple(h, r, t)).collect(),
                rules_used: entry.rules.into_iter().map(RuleId).collect(),
                confidence: entry.confidence,
                hops: entry.hops,
                pattern: entry.pattern,
            });
        }
        Ok((conclusion, out))
    }
}

pub fn write_path_meta<W: Write>(
    candidates: &BTreeMap<Triple, Vec<GroundedPath>>,
    vocab: &Vocabulary,
    mut writer: W,
) -> Result<(), PathMetaError> {
    for (c, paths) in candidates {
        let record = PathRecord::from_paths(c, paths, vocab);
        serde_json::to_writer(&mut writer, &record).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_path_meta<R: BufRead>(
    reader: R,
    vocab: &mut Vocabulary,
) -> Result<BTreeMap<Triple, Vec<GroundedPath>>, PathMetaError> {
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let format = |message: String| PathMetaError::Format { line: idx + 1, message };
        let record: PathRecord = serde_json::from_str(&line).map_err(|e| format(e.to_string()))?;
        let (conclusion, paths) = record.into_paths(vocab).map_err(format)?;
        if out.insert(conclusion, paths).is_some() {
            return Err(format("conclusion listed twice".into()));
        }
    }
    Ok(out)
}
