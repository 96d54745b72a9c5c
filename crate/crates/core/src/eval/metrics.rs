use std::fmt;

use crate::curate::Label;

/// Binary confusion counts with +1 as the positive class.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, gold: Label, predicted: Label) {
        match (gold.closed() == Label::Positive, predicted.closed() == Label::Positive) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> BinaryMetrics {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        BinaryMetrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision,
            recall,
            f1: harmonic(precision, recall),
            degenerate: self.tp + self.fp == 0,
            n: self.total(),
        }
    }
}

pub(crate) fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Accuracy, precision, recall and F1 on the positive class. `degenerate`
/// marks the case with no positive predictions, where precision is 0 by
/// convention.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
    pub n: usize,
}

impl fmt::Display for BinaryMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n={}", self.n)?;
        writeln!(f, "accuracy={}", self.accuracy)?;
        writeln!(f, "precision={}", self.precision)?;
        writeln!(f, "recall={}", self.recall)?;
        writeln!(f, "f1={}", self.f1)?;
        writeln!(f, "degenerate={}", self.degenerate)
    }
}

fn class_index(label: Label) -> usize {
    match label {
        Label::Negative => 0,
        Label::Unknown => 1,
        Label::Positive => 2,
    }
}

/// Three-class confusion matrix, `counts[gold][predicted]`, classes in the
/// order -1, 0, +1.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct OpenConfusion {
    pub counts: [[usize; 3]; 3],
}

impl OpenConfusion {
    pub fn add(&mut self, gold: Label, predicted: Label) {
        self.counts[class_index(gold)][class_index(predicted)] += 1;
    }

    pub fn metrics(&self) -> MacroMetrics {
        macro_scores(&self.counts)
    }

    /// Collapses unknowns into negatives on both axes.
    pub fn closed(&self) -> Confusion {
        let c = &self.counts;
        let neg = |i: usize| c[i][0] + c[i][1];
        Confusion { tp: c[2][2], fp: c[0][2] + c[1][2], tn: neg(0) + neg(1), fn_: neg(2) }
    }
}

/// Macro-averaged scores over the classes present in gold or predictions.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MacroMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n: usize,
}

impl fmt::Display for MacroMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n={}", self.n)?;
        writeln!(f, "accuracy={}", self.accuracy)?;
        writeln!(f, "macro_precision={}", self.precision)?;
        writeln!(f, "macro_recall={}", self.recall)?;
        writeln!(f, "macro_f1={}", self.f1)
    }
}

pub fn macro_scores(counts: &[[usize; 3]; 3]) -> MacroMetrics {
    let n: usize = counts.iter().flatten().sum();
    let mut classes = 0usize;
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    let mut correct = 0;
    for c in 0..3 {
        let gold: usize = counts[c].iter().sum();
        let predicted: usize = (0..3).map(|g| counts[g][c]).sum();
        let tp = counts[c][c];
        correct += tp;
        if gold == 0 && predicted == 0 {
            continue;
        }
        classes += 1;
        let p = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let r = if gold == 0 { 0.0 } else { tp as f64 / gold as f64 };
        p_sum += p;
        r_sum += r;
        f_sum += harmonic(p, r);
    }
    let k = classes.max(1) as f64;
    MacroMetrics {
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        precision: p_sum / k,
        recall: r_sum / k,
        f1: f_sum / k,
        n,
    }
}
