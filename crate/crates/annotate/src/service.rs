use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use inferkg_core::curate::Label;
use inferkg_core::pathmeta::PathRecord;
use serde::Serialize;

use crate::store::{Event, LabelStore};
use crate::task::{AnnotationTask, Step1, Step2, TaskId, TaskState, TaskView};
use crate::AnnotateError;

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceConfig {
    pub lease_ms: u64,
    /// Accept new answers for finalized tasks, keeping every answer.
    pub relabel: bool,
    pub snapshot_every: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { lease_ms: 15 * 60 * 1000, relabel: false, snapshot_every: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lease {
    pub annotator: String,
    pub expires_at: u64,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EnqueueReport {
    pub added: usize,
    /// Candidates already queued, in any state.
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SubmitOutcome {
    Finalized { task_id: TaskId, triple: [String; 3], label: Label },
    /// Step 1 was -1; the view now carries the evidence for step 2.
    Step2Pending(TaskView),
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub total: usize,
    pub pending: usize,
    pub step1_done: usize,
    pub finalized: usize,
    pub leased: usize,
    pub positive: usize,
    pub negative: usize,
    pub unknown: usize,
}

/// Queue, leases and label log. Leases live in memory only: after a
/// restart every unfinished task is available again.
#[derive(Debug)]
pub struct AnnotationService {
    store: LabelStore,
    leases: HashMap<TaskId, Lease>,
    config: ServiceConfig,
}

impl AnnotationService {
    pub fn open(dir: &Path, config: ServiceConfig) -> Result<Self, AnnotateError> {
        let store = LabelStore::open(dir, config.snapshot_every)?;
        Ok(Self { store, leases: HashMap::new(), config })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn task(&self, id: &TaskId) -> Option<&AnnotationTask> {
        self.store.state().tasks.get(id)
    }

    pub fn tasks(&self) -> Vec<&AnnotationTask> {
        self.store.state().ordered()
    }

    pub fn store(&self) -> &LabelStore {
        &self.store
    }

    /// Queues one task per new candidate in input order.
    pub fn enqueue(&mut self, records: impl IntoIterator<Item = PathRecord>, now: u64) -> Result<EnqueueReport, AnnotateError> {
        let mut report = EnqueueReport::default();
        let mut batch = HashSet::new();
        for record in records {
            let task_id = TaskId::for_triple(&record.conclusion);
            if self.task(&task_id).is_some() || !batch.insert(task_id.clone()) {
                report.skipped += 1;
                continue;
            }
            self.store.append(Event::Enqueued { task_id, triple: record.conclusion, paths: record.paths, at: now })?;
            report.added += 1;
        }
        Ok(report)
    }

    fn live_lease(&self, id: &TaskId, now: u64) -> Option<&Lease> {
        self.leases.get(id).filter(|l| l.expires_at > now)
    }

    /// The annotator's current unfinished task, otherwise the oldest
    /// unfinished task nobody holds a live lease on. Leases it.
    pub fn next_task(&mut self, annotator: &str, now: u64) -> Option<TaskView> {
        self.leases.retain(|_, l| l.expires_at > now);
        let expires_at = now + self.config.lease_ms;
        let state = self.store.state();
        let held = self
            .leases
            .iter()
            .filter(|(id, l)| l.annotator == annotator && state.tasks[*id].state != TaskState::Finalized)
            .map(|(id, _)| &state.tasks[id])
            .min_by_key(|t| t.seq);
        let task = held.or_else(|| {
            state.ordered().into_iter().find(|t| t.state != TaskState::Finalized && !self.leases.contains_key(&t.id))
        })?;
        let view = TaskView::from(task);
        self.leases.insert(task.id.clone(), Lease { annotator: annotator.to_owned(), expires_at });
        Some(view)
    }

    pub fn submit(
        &mut self,
        task_id: &TaskId,
        annotator: &str,
        step1: Step1,
        step2: Option<Step2>,
        now: u64,
    ) -> Result<SubmitOutcome, AnnotateError> {
        let task = self.task(task_id).ok_or_else(|| AnnotateError::UnknownTask(task_id.to_string()))?;
        if step1 == Step1::Correct && step2.is_some() {
            return Err(AnnotateError::Step2WithCorrect);
        }
        if task.state == TaskState::Finalized {
            if !self.config.relabel {
                return Err(AnnotateError::AlreadyFinalized(task_id.to_string()));
            }
        } else if self.live_lease(task_id, now).is_none_or(|l| l.annotator != annotator) {
            return Err(AnnotateError::NotLeased { task: task_id.to_string(), annotator: annotator.to_owned() });
        }
        self.store.append(Event::Submitted {
            task_id: task_id.clone(),
            annotator: annotator.to_owned(),
            step1,
            step2,
            at: now,
        })?;
        let task = &self.store.state().tasks[task_id];
        match task.state {
            TaskState::Finalized => {
                self.leases.remove(task_id);
                Ok(SubmitOutcome::Finalized {
                    task_id: task_id.clone(),
                    triple: task.triple.clone(),
                    label: task.label().expect("finalized tasks have a label"),
                })
            }
            _ => {
                let view = TaskView::from(task);
                self.leases
                    .insert(task_id.clone(), Lease { annotator: annotator.to_owned(), expires_at: now + self.config.lease_ms });
                Ok(SubmitOutcome::Step2Pending(view))
            }
        }
    }

    pub fn progress(&self, now: u64) -> Progress {
        let mut p = Progress::default();
        for task in self.store.state().tasks.values() {
            p.total += 1;
            match task.state {
                TaskState::Pending => p.pending += 1,
                TaskState::Step1Done => p.step1_done += 1,
                TaskState::Finalized => p.finalized += 1,
            }
            match task.label() {
                Some(Label::Positive) => p.positive += 1,
                Some(Label::Negative) => p.negative += 1,
                Some(Label::Unknown) => p.unknown += 1,
                None => {}
            }
        }
        p.leased = self.leases.values().filter(|l| l.expires_at > now).count();
        p
    }

    /// Latest final label per triple.
    pub fn labels(&self) -> BTreeMap<[String; 3], Label> {
        self.store.state().tasks.values().filter_map(|t| Some((t.triple.clone(), t.label()?))).collect()
    }

    /// `head relation tail label` rows sorted by triple. Unfinished tasks
    /// are an error unless `partial`.
    pub fn export(&self, partial: bool) -> Result<String, AnnotateError> {
        let unfinished = self.store.state().tasks.values().filter(|t| t.state != TaskState::Finalized).count();
        if unfinished > 0 && !partial {
            return Err(AnnotateError::PendingTasks(unfinished));
        }
        Ok(self
            .labels()
            .into_iter()
            .map(|([h, r, t], label)| format!("{h}\t{r}\t{t}\t{label}\n"))
            .collect())
    }
}
