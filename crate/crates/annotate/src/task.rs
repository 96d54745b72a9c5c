use std::fmt;

use inferkg_core::curate::Label;
use inferkg_core::pathmeta::PathEntry;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Content-derived task id: re-enqueueing a triple always yields the same id.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub String);

impl TaskId {
    pub fn for_triple(triple: &[String; 3]) -> Self {
        let digest = Sha256::digest(triple.join("\t").as_bytes());
        Self(digest.iter().take(12).map(|b| format!("{b:02x}")).collect())
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Step 1: is the triple factually correct (by any source)?
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Step1 {
    Correct,
    Incorrect,
}

/// Step 2, only after an incorrect step 1: can the triple be refuted from
/// the shown evidence (-1), or is it merely not inferable (0)?
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Step2 {
    Unknown,
    Negative,
}

impl TryFrom<i64> for Step1 {
    type Error = String;

    fn try_from(v: i64) -> Result<Self, String> {
        match v {
            1 => Ok(Step1::Correct),
            -1 => Ok(Step1::Incorrect),
            _ => Err(format!("step1 must be 1 or -1, got {v}")),
        }
    }
}

impl From<Step1> for i64 {
    fn from(s: Step1) -> i64 {
        match s {
            Step1::Correct => 1,
            Step1::Incorrect => -1,
        }
    }
}

impl TryFrom<i64> for Step2 {
    type Error = String;

    fn try_from(v: i64) -> Result<Self, String> {
        match v {
            0 => Ok(Step2::Unknown),
            -1 => Ok(Step2::Negative),
            _ => Err(format!("step2 must be 0 or -1, got {v}")),
        }
    }
}

impl From<Step2> for i64 {
    fn from(s: Step2) -> i64 {
        match s {
            Step2::Unknown => 0,
            Step2::Negative => -1,
        }
    }
}

/// Final label of a complete two-step answer; `None` while step 2 is
/// outstanding or when step 2 accompanies a correct step 1.
pub fn final_label(step1: Step1, step2: Option<Step2>) -> Option<Label> {
    match (step1, step2) {
        (Step1::Correct, None) => Some(Label::Positive),
        (Step1::Correct, Some(_)) => None,
        (Step1::Incorrect, None) => None,
        (Step1::Incorrect, Some(Step2::Negative)) => Some(Label::Negative),
        (Step1::Incorrect, Some(Step2::Unknown)) => Some(Label::Unknown),
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskState {
    Pending,
    Step1Done,
    Finalized,
}

/// One finalized answer; several exist only under relabeling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub label: Label,
    pub annotator: String,
    pub at: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub id: TaskId,
    /// Enqueue order; lower is served first.
    pub seq: u64,
    pub triple: [String; 3],
    pub paths: Vec<PathEntry>,
    pub state: TaskState,
    pub step1: Option<Step1>,
    pub step2: Option<Step2>,
    pub annotator: Option<String>,
    pub created_at: u64,
    pub updated_at: u64,
    pub history: Vec<FinalAnswer>,
}

impl AnnotationTask {
    pub fn label(&self) -> Option<Label> {
        self.history.last().map(|a| a.label)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.step2.is_some() && self.step1 != Some(Step1::Incorrect) {
            return Err(format!("task {}: step2 without an incorrect step1", self.id));
        }
        let complete = self.step1.is_some_and(|s| final_label(s, self.step2).is_some());
        if complete != (self.state == TaskState::Finalized) {
            return Err(format!("task {}: state {:?} disagrees with its steps", self.id, self.state));
        }
        if (self.state == TaskState::Finalized) == self.history.is_empty() {
            return Err(format!("task {}: finalized state without history", self.id));
        }
        Ok(())
    }
}

/// Annotator-facing payload. Evidence is withheld in step 1, where any
/// external source may be used, and shown in step 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: TaskId,
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub step: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Vec<PathEntry>>,
}

impl From<&AnnotationTask> for TaskView {
    fn from(t: &AnnotationTask) -> Self {
        let step2 = t.state == TaskState::Step1Done;
        let [head, relation, tail] = t.triple.clone();
        Self {
            task_id: t.id.clone(),
            head,
            relation,
            tail,
            step: if step2 { 2 } else { 1 },
            evidence: step2.then(|| t.paths.clone()),
        }
    }
}
