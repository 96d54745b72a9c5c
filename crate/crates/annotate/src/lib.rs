//! Two-step human labeling of candidate triples that could not be labeled
//! automatically.
//!
//! Step 1 asks whether a triple is correct. A correct triple is labeled +1.
//! An incorrect one goes to step 2, where the annotator sees the supporting
//! paths and decides whether they refute it (-1) or merely fail to support
//! it (0).

pub mod api;
pub mod service;
pub mod store;
pub mod task;

use std::collections::BTreeMap;
use std::io::BufRead;

use inferkg_core::curate::Label;
use thiserror::Error;

pub use api::{router, system_clock, AppState, Clock};
pub use service::{AnnotationService, EnqueueReport, Progress, ServiceConfig, SubmitOutcome};
pub use task::{final_label, AnnotationTask, Step1, Step2, TaskId, TaskState, TaskView};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("step2 is only allowed when step1 is -1")]
    Step2WithCorrect,
    #[error("relabeling a finalized task needs a complete answer")]
    Step2Required,
    #[error("task {0} is already finalized")]
    AlreadyFinalized(String),
    #[error("task {task} is not leased to annotator {annotator}")]
    NotLeased { task: String, annotator: String },
    #[error("{0} tasks are not finalized; export with partial=true to skip them")]
    PendingTasks(usize),
    #[error("label maps share no keys")]
    NoSharedKeys,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("corrupt store at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fraction of shared keys on which both maps agree.
pub fn agreement<K: Ord>(a: &BTreeMap<K, Label>, b: &BTreeMap<K, Label>) -> Result<f64, AnnotateError> {
    let (shared, same) = a
        .iter()
        .filter_map(|(k, la)| b.get(k).map(|lb| la == lb))
        .fold((0usize, 0usize), |(n, s), eq| (n + 1, s + eq as usize));
    if shared == 0 {
        return Err(AnnotateError::NoSharedKeys);
    }
    Ok(same as f64 / shared as f64)
}

/// Reads `head relation tail label` rows, as written by the export.
pub fn read_label_map<R: BufRead>(reader: R) -> Result<BTreeMap<[String; 3], Label>, AnnotateError> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let format = |message: String| AnnotateError::Format { line: i + 1, message };
        let fields: Vec<&str> = line.split('\t').collect();
        let [h, r, t, label] = fields[..] else {
            return Err(format(format!("expected 4 tab-separated fields, found {}", fields.len())));
        };
        let label: Label = label.parse().map_err(format)?;
        if out.insert([h.to_owned(), r.to_owned(), t.to_owned()], label).is_some_and(|old| old != label) {
            return Err(format(format!("conflicting labels for {h} {r} {t}")));
        }
    }
    Ok(out)
}
