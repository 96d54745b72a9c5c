//! Append-only submission log with periodic snapshots.
//!
//! The log is the source of truth: the materialized tasks are a pure
//! function of its events. A snapshot records how many events it covers so
//! recovery loads it and replays only the tail of the log.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use inferkg_core::pathmeta::PathEntry;
use serde::{Deserialize, Serialize};

use crate::task::{final_label, AnnotationTask, FinalAnswer, Step1, Step2, TaskId, TaskState};
use crate::AnnotateError;

pub const LOG_FILE: &str = "log.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Enqueued { task_id: TaskId, triple: [String; 3], paths: Vec<PathEntry>, at: u64 },
    Submitted { task_id: TaskId, annotator: String, step1: Step1, step2: Option<Step2>, at: u64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Materialized {
    /// Number of log events applied.
    pub events: u64,
    pub tasks: BTreeMap<TaskId, AnnotationTask>,
}

impl Materialized {
    /// Applies one event. Only events that passed validation are logged, so
    /// replay trusts them; refinalization is accepted here for that reason.
    pub fn apply(&mut self, event: &Event) -> Result<(), AnnotateError> {
        match event {
            Event::Enqueued { task_id, triple, paths, at } => {
                if self.tasks.contains_key(task_id) {
                    return Err(AnnotateError::Corrupt {
                        line: self.events as usize + 1,
                        message: format!("task {task_id} enqueued twice"),
                    });
                }
                let seq = self.tasks.len() as u64;
                self.tasks.insert(
                    task_id.clone(),
                    AnnotationTask {
                        id: task_id.clone(),
                        seq,
                        triple: triple.clone(),
                        paths: paths.clone(),
                        state: TaskState::Pending,
                        step1: None,
                        step2: None,
                        annotator: None,
                        created_at: *at,
                        updated_at: *at,
                        history: Vec::new(),
                    },
                );
            }
            Event::Submitted { task_id, annotator, step1, step2, at } => {
                let task = self.tasks.get_mut(task_id).ok_or_else(|| AnnotateError::UnknownTask(task_id.to_string()))?;
                let label = final_label(*step1, *step2);
                if *step1 == Step1::Correct && step2.is_some() {
                    return Err(AnnotateError::Step2WithCorrect);
                }
                if label.is_none() && task.state == TaskState::Finalized {
                    return Err(AnnotateError::Step2Required);
                }
                task.step1 = Some(*step1);
                task.step2 = *step2;
                task.annotator = Some(annotator.clone());
                task.updated_at = *at;
                match label {
                    Some(label) => {
                        task.state = TaskState::Finalized;
                        task.history.push(FinalAnswer { label, annotator: annotator.clone(), at: *at });
                    }
                    None => task.state = TaskState::Step1Done,
                }
            }
        }
        self.events += 1;
        Ok(())
    }

    /// Tasks in enqueue order.
    pub fn ordered(&self) -> Vec<&AnnotationTask> {
        let mut tasks: Vec<&AnnotationTask> = self.tasks.values().collect();
        tasks.sort_by_key(|t| t.seq);
        tasks
    }
}

/// Persistent store rooted at a directory holding the log and snapshot.
#[derive(Debug)]
pub struct LabelStore {
    dir: PathBuf,
    log: File,
    state: Materialized,
    snapshot_every: u64,
}

impl LabelStore {
    /// Opens or creates the store. A final log line cut short by a crash is
    /// dropped; any other unreadable line is an error.
    pub fn open(dir: &Path, snapshot_every: u64) -> Result<Self, AnnotateError> {
        fs::create_dir_all(dir)?;
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        let mut state = if snapshot_path.exists() {
            serde_json::from_reader(BufReader::new(File::open(&snapshot_path)?))
                .map_err(|e| AnnotateError::Corrupt { line: 0, message: format!("snapshot: {e}") })?
        } else {
            Materialized::default()
        };
        let covered = state.events;

        let log_path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new().read(true).append(true).create(true).open(&log_path)?;
        let mut text = String::new();
        log.read_to_string(&mut text)?;
        let mut good_len = 0usize;
        let mut events = Vec::new();
        for (i, line) in text.split_inclusive('\n').enumerate() {
            if !line.ends_with('\n') {
                log::warn!("dropping incomplete final log line {}", i + 1);
                break;
            }
            let event = serde_json::from_str::<Event>(line.trim_end())
                .map_err(|e| AnnotateError::Corrupt { line: i + 1, message: e.to_string() })?;
            events.push(event);
            good_len += line.len();
        }
        if good_len < text.len() {
            log.set_len(good_len as u64)?;
            log.seek(SeekFrom::End(0))?;
        }
        if (events.len() as u64) < covered {
            return Err(AnnotateError::Corrupt {
                line: events.len(),
                message: format!("snapshot covers {covered} events but the log has {}", events.len()),
            });
        }
        for event in &events[covered as usize..] {
            state.apply(event)?;
        }
        Ok(Self { dir: dir.to_path_buf(), log, state, snapshot_every: snapshot_every.max(1) })
    }

    pub fn state(&self) -> &Materialized {
        &self.state
    }

    /// Applies the event, then logs it durably before returning.
    pub fn append(&mut self, event: Event) -> Result<(), AnnotateError> {
        let mut line = serde_json::to_string(&event).expect("events serialize");
        line.push('\n');
        self.state.apply(&event)?;
        self.log.write_all(line.as_bytes())?;
        self.log.flush()?;
        self.log.sync_data()?;
        if self.state.events % self.snapshot_every == 0 {
            self.snapshot()?;
        }
        Ok(())
    }

    /// Writes the materialized state atomically.
    pub fn snapshot(&self) -> Result<(), AnnotateError> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let mut f = File::create(&tmp)?;
        serde_json::to_writer(&mut f, &self.state).expect("state serializes");
        f.sync_all()?;
        fs::rename(tmp, self.dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }
}

/// Replays a log from scratch, ignoring any snapshot.
pub fn replay<R: BufRead>(reader: R) -> Result<Materialized, AnnotateError> {
    let mut state = Materialized::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event =
            serde_json::from_str(&line).map_err(|e| AnnotateError::Corrupt { line: i + 1, message: e.to_string() })?;
        state.apply(&event)?;
    }
    Ok(state)
}
