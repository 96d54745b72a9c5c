use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use super::EvalError;
use crate::curate::{shortest_hops, DatasetBundle, Label, LabeledTriple, Provenance};
use crate::kg::Triple;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Pattern,
    Hop,
    NegativeType,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Pattern => "pattern",
            Axis::Hop => "hop",
            Axis::NegativeType => "negative_type",
        })
    }
}

/// Per-item metric values, e.g. `[correct]` for classification or
/// `[reciprocal rank, hit@1, hit@10]` for one ranking query.
#[derive(Clone, Debug, PartialEq)]
pub struct BreakdownItem {
    pub triple: Triple,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BreakdownRow {
    pub axis: Axis,
    pub stratum: String,
    pub count: usize,
    /// Mean of each metric over the stratum.
    pub means: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Stratum {
    Name(usize, String),
    Hop(usize),
    NoPath,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stratum::Name(_, s) => f.write_str(s),
            Stratum::Hop(h) => write!(f, "{h}"),
            Stratum::NoPath => f.write_str("none"),
        }
    }
}

fn negative_type(l: &LabeledTriple) -> Stratum {
    match (l.label, l.provenance) {
        (Label::Positive, _) => Stratum::Name(0, "positive".into()),
        (_, Provenance::Corruption) => Stratum::Name(1, "corruption".into()),
        _ => Stratum::Name(2, "human".into()),
    }
}

/// Recomputes metric means per pattern (every pattern among a triple's
/// paths), per shortest-path length and per negative type. Items whose
/// triple is not labeled in the bundle are an error.
pub fn breakdown(items: &[BreakdownItem], bundle: &DatasetBundle) -> Result<Vec<BreakdownRow>, EvalError> {
    let labels: HashMap<Triple, &LabeledTriple> = bundle.labeled().map(|l| (l.triple, l)).collect();
    let width = items.first().map_or(0, |i| i.values.len());
    let mut sums: BTreeMap<(Axis, Stratum), (usize, Vec<f64>)> = BTreeMap::new();
    for item in items {
        let l = labels
            .get(&item.triple)
            .ok_or_else(|| EvalError::MissingMetadata(bundle.vocab.labels(&item.triple).join(" ")))?;
        let mut strata = vec![(Axis::NegativeType, negative_type(l))];
        match bundle.paths.get(&item.triple).filter(|p| !p.is_empty()) {
            Some(paths) => {
                let patterns: BTreeSet<_> = paths.iter().map(|p| p.pattern).collect();
                strata.extend(patterns.into_iter().map(|p| (Axis::Pattern, Stratum::Name(p as usize, p.to_string()))));
                strata.push((Axis::Hop, Stratum::Hop(shortest_hops(paths))));
            }
            None => {
                strata.push((Axis::Pattern, Stratum::NoPath));
                strata.push((Axis::Hop, Stratum::NoPath));
            }
        }
        for key in strata {
            let entry = sums.entry(key).or_insert_with(|| (0, vec![0.0; width]));
            entry.0 += 1;
            for (s, v) in entry.1.iter_mut().zip(&item.values) {
                *s += v;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|((axis, stratum), (count, totals))| BreakdownRow {
            axis,
            stratum: stratum.to_string(),
            count,
            means: totals.into_iter().map(|s| s / count as f64).collect(),
        })
        .collect())
}

pub fn write_breakdown_tsv<W: Write>(rows: &[BreakdownRow], metrics: &[&str], mut w: W) -> std::io::Result<()> {
    writeln!(w, "axis\tstratum\tcount\t{}", metrics.join("\t"))?;
    for row in rows {
        let values: Vec<String> = row.means.iter().map(f64::to_string).collect();
        writeln!(w, "{}\t{}\t{}\t{}", row.axis, row.stratum, row.count, values.join("\t"))?;
    }
    Ok(())
}

/// Plot series for one axis: `x,<metrics...>,count`.
pub fn write_breakdown_csv<W: Write>(rows: &[BreakdownRow], axis: Axis, metrics: &[&str], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{axis},{},count", metrics.join(","))?;
    for row in rows.iter().filter(|r| r.axis == axis) {
        let values: Vec<String> = row.means.iter().map(f64::to_string).collect();
        writeln!(w, "{},{},{}", row.stratum, values.join(","), row.count)?;
    }
    Ok(())
}
