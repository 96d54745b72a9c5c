use std::collections::BTreeMap;

use super::metrics::{macro_scores, Confusion, MacroMetrics, OpenConfusion};
use super::{EvalError, Scored};
use crate::curate::Label;
use crate::kg::RelationId;

/// Candidate cut points for `scores`: the midpoint of every pair of
/// consecutive distinct values, plus one cut past each end at half the
/// outermost gap (a unit margin when all scores are equal). Sorted
/// ascending; never equal to any score.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) else {
        return vec![0.0];
    };
    let n = sorted.len();
    let (below, above) = if n > 1 {
        ((sorted[1] - lo) / 2.0, (hi - sorted[n - 2]) / 2.0)
    } else {
        (1.0 + lo.abs(), 1.0 + hi.abs())
    };
    let mut out = Vec::with_capacity(n + 1);
    out.push(lo - below);
    out.extend(sorted.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(hi + above);
    out
}

/// Distinct scores ascending with per-class counts (-1, 0, +1).
fn grouped(points: &[(f64, Label)]) -> Vec<(f64, [usize; 3])> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, [usize; 3])> = Vec::new();
    for (s, l) in sorted {
        let idx = match l {
            Label::Negative => 0,
            Label::Unknown => 1,
            Label::Positive => 2,
        };
        match out.last_mut() {
            Some((v, counts)) if *v == s => counts[idx] += 1,
            _ => {
                let mut counts = [0; 3];
                counts[idx] = 1;
                out.push((s, counts));
            }
        }
    }
    out
}

/// Accuracy-maximizing threshold for "positive iff score > t", with
/// unknowns treated as negatives. Returns the threshold and the number of
/// correct predictions; ties go to the lower threshold.
pub fn fit_single(points: &[(f64, Label)]) -> (f64, usize) {
    let groups = grouped(points);
    let scores: Vec<f64> = groups.iter().map(|g| g.0).collect();
    let cuts = candidate_thresholds(&scores);
    let mut correct: usize = groups.iter().map(|g| g.1[2]).sum();
    let mut best = (cuts[0], correct);
    for (k, (_, counts)) in groups.iter().enumerate() {
        // group k moves below the cut
        correct = correct + counts[0] + counts[1] - counts[2];
        if correct > best.1 {
            best = (cuts[k + 1], correct);
        }
    }
    best
}

/// Macro-F1-maximizing pair (low, high). Scores below `low` are predicted
/// -1, above `high` +1, otherwise 0. Ties go to the lexicographically
/// smallest pair.
pub fn fit_pair(points: &[(f64, Label)]) -> ((f64, f64), MacroMetrics) {
    let groups = grouped(points);
    let scores: Vec<f64> = groups.iter().map(|g| g.0).collect();
    let cuts = candidate_thresholds(&scores);
    // below[k][y]: class-y items in groups before cut k
    let mut below = vec![[0usize; 3]; cuts.len()];
    for (k, (_, counts)) in groups.iter().enumerate() {
        for y in 0..3 {
            below[k + 1][y] = below[k][y] + counts[y];
        }
    }
    let total = below[cuts.len() - 1];
    let mut best: Option<((f64, f64), MacroMetrics)> = None;
    for i in 0..cuts.len() {
        for j in i..cuts.len() {
            let mut counts = [[0usize; 3]; 3];
            for y in 0..3 {
                counts[y][0] = below[i][y];
                counts[y][1] = below[j][y] - below[i][y];
                counts[y][2] = total[y] - below[j][y];
            }
            let m = macro_scores(&counts);
            if best.as_ref().is_none_or(|(_, b)| m.f1 > b.f1) {
                best = Some(((cuts[i], cuts[j]), m));
            }
        }
    }
    best.expect("at least one cut")
}

fn by_relation(points: &[Scored]) -> BTreeMap<RelationId, Vec<(f64, Label)>> {
    let mut out: BTreeMap<RelationId, Vec<(f64, Label)>> = BTreeMap::new();
    for p in points {
        out.entry(p.triple.relation).or_default().push((p.score, p.label));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedPolicy {
    pub per_relation: BTreeMap<RelationId, f64>,
    /// Used for relations absent from the validation set.
    pub global: f64,
}

impl ClosedPolicy {
    pub fn threshold(&self, relation: RelationId) -> f64 {
        self.per_relation.get(&relation).copied().unwrap_or(self.global)
    }

    pub fn predict(&self, p: &Scored) -> Label {
        if p.score > self.threshold(p.triple.relation) {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

pub fn fit_closed(valid: &[Scored]) -> Result<ClosedPolicy, EvalError> {
    if valid.is_empty() {
        return Err(EvalError::EmptyValidation);
    }
    let all: Vec<(f64, Label)> = valid.iter().map(|p| (p.score, p.label)).collect();
    Ok(ClosedPolicy {
        per_relation: by_relation(valid).into_iter().map(|(r, pts)| (r, fit_single(&pts).0)).collect(),
        global: fit_single(&all).0,
    })
}

pub fn eval_closed(test: &[Scored], policy: &ClosedPolicy) -> Confusion {
    let mut c = Confusion::default();
    for p in test {
        c.add(p.label, policy.predict(p));
    }
    c
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpenPolicy {
    pub per_relation: BTreeMap<RelationId, (f64, f64)>,
    pub global: (f64, f64),
}

impl OpenPolicy {
    pub fn thresholds(&self, relation: RelationId) -> (f64, f64) {
        self.per_relation.get(&relation).copied().unwrap_or(self.global)
    }

    pub fn predict(&self, p: &Scored) -> Label {
        predict_pair(p.score, self.thresholds(p.triple.relation))
    }
}

fn predict_pair(score: f64, (low, high): (f64, f64)) -> Label {
    if score > high {
        Label::Positive
    } else if score < low {
        Label::Negative
    } else {
        Label::Unknown
    }
}

pub fn fit_open(valid: &[Scored]) -> Result<OpenPolicy, EvalError> {
    if valid.is_empty() {
        return Err(EvalError::EmptyValidation);
    }
    let all: Vec<(f64, Label)> = valid.iter().map(|p| (p.score, p.label)).collect();
    Ok(OpenPolicy {
        per_relation: by_relation(valid).into_iter().map(|(r, pts)| (r, fit_pair(&pts).0)).collect(),
        global: fit_pair(&all).0,
    })
}

pub fn eval_open(test: &[Scored], policy: &OpenPolicy) -> OpenConfusion {
    let mut c = OpenConfusion::default();
    for p in test {
        c.add(p.label, policy.predict(p));
    }
    c
}

/// Spread of test macro-F1 when one global threshold pair is taken from a
/// grid over the validation scores.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Sensitivity {
    pub best: f64,
    pub worst: f64,
    pub mean: f64,
    pub pairs: usize,
}

/// Evaluates every pair from at most `grid` evenly spaced validation cut
/// points.
pub fn sensitivity(valid: &[Scored], test: &[Scored], grid: usize) -> Sensitivity {
    let scores: Vec<f64> = valid.iter().map(|p| p.score).collect();
    let cuts = candidate_thresholds(&scores);
    let picked: Vec<f64> = if cuts.len() <= grid.max(2) {
        cuts
    } else {
        let g = grid.max(2);
        (0..g).map(|k| cuts[k * (cuts.len() - 1) / (g - 1)]).collect()
    };
    let mut out = Sensitivity { best: f64::NEG_INFINITY, worst: f64::INFINITY, mean: 0.0, pairs: 0 };
    let mut sum = 0.0;
    for i in 0..picked.len() {
        for j in i..picked.len() {
            let mut c = OpenConfusion::default();
            for p in test {
                c.add(p.label, predict_pair(p.score, (picked[i], picked[j])));
            }
            let f1 = c.metrics().f1;
            out.best = out.best.max(f1);
            out.worst = out.worst.min(f1);
            sum += f1;
            out.pairs += 1;
        }
    }
    out.mean = sum / out.pairs as f64;
    out
}
