//! Hard negatives, pattern balancing, automatic labels and bundle assembly.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple, Vocabulary};
use crate::split::{path_entities, GroundedPath, Pattern};

pub const DEFAULT_EXCLUSIVITY: f64 = 1.2;
pub const DEFAULT_DENSE_THRESHOLD: f64 = 0.6;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Unknown,
    Positive,
}

impl Label {
    pub fn value(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
            Label::Unknown => 0,
        }
    }

    /// Closed-world view: unknowns count as negatives.
    pub fn closed(self) -> Label {
        match self {
            Label::Unknown => Label::Negative,
            l => l,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "1" | "+1" => Ok(Label::Positive),
            "-1" => Ok(Label::Negative),
            "0" => Ok(Label::Unknown),
            other => Err(format!("label `{other}` is not one of 1, -1, 0")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    KgAuto,
    Human,
    Corruption,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::KgAuto => "kg-auto",
            Provenance::Human => "human",
            Provenance::Corruption => "corruption",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Provenance::KgAuto, Provenance::Human, Provenance::Corruption]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown provenance `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTriple {
    pub triple: Triple,
    pub label: Label,
    pub provenance: Provenance,
    /// Highest confidence among the triple's paths; positives only.
    pub confidence: Option<f64>,
}

impl LabeledTriple {
    pub fn new(triple: Triple, label: Label, provenance: Provenance) -> Self {
        Self { triple, label, provenance, confidence: None }
    }

    pub fn check(&self) -> Result<(), CurateError> {
        let ok = match self.provenance {
            Provenance::KgAuto => self.label == Label::Positive,
            Provenance::Corruption => self.label == Label::Negative,
            Provenance::Human => true,
        };
        if ok && (self.confidence.is_none() || self.label == Label::Positive) {
            Ok(())
        } else {
            Err(CurateError::InconsistentLabel(self.triple))
        }
    }
}

#[derive(Debug, Error)]
pub enum CurateError {
    #[error("positive {0:?} has no supporting path inside train")]
    PositiveWithoutPath(Triple),
    #[error("labeled triple {0:?} also appears in train")]
    Leak(Triple),
    #[error("triple {0:?} is labeled twice")]
    DuplicateLabel(Triple),
    #[error("label and provenance of {0:?} are inconsistent")]
    InconsistentLabel(Triple),
    #[error("{file}:{line}: {message}")]
    Format { file: String, line: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Mean number of distinct tails per head, or `None` when the relation has
/// no triples.
pub fn exclusivity_ratio(kg: &KnowledgeGraph, relation: RelationId) -> Option<f64> {
    let triples = kg.relation_triples(relation);
    if triples.is_empty() {
        return None;
    }
    let heads: HashSet<EntityId> = triples.iter().map(|t| t.head).collect();
    Some(triples.len() as f64 / heads.len() as f64)
}

pub fn is_exclusive(kg: &KnowledgeGraph, relation: RelationId, threshold: f64) -> bool {
    exclusivity_ratio(kg, relation).is_some_and(|r| r <= threshold)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorruptionOutcome {
    pub negatives: Vec<LabeledTriple>,
    pub shortfall: usize,
}

/// Replaces the head or tail of positives on exclusive relations with an
/// entity from `pool`. Generated triples avoid `kg`, `forbidden` and each
/// other. Sampling gives up after a bounded number of attempts and reports
/// the shortfall.
pub fn corrupt_negatives(
    positives: &[LabeledTriple],
    kg: &KnowledgeGraph,
    forbidden: &HashSet<Triple>,
    pool: &[EntityId],
    needed: usize,
    exclusivity: f64,
    seed: u64,
) -> CorruptionOutcome {
    let mut cache: HashMap<RelationId, bool> = HashMap::new();
    let eligible: Vec<Triple> = positives
        .iter()
        .filter(|p| p.label == Label::Positive)
        .map(|p| p.triple)
        .filter(|t| *cache.entry(t.relation).or_insert_with(|| is_exclusive(kg, t.relation, exclusivity)))
        .collect();
    let mut negatives = Vec::with_capacity(needed);
    if eligible.is_empty() || pool.is_empty() {
        return CorruptionOutcome { negatives, shortfall: needed };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut made: HashSet<Triple> = HashSet::new();
    let mut attempts = needed.saturating_mul(100);
    while negatives.len() < needed && attempts > 0 {
        attempts -= 1;
        let base = *eligible.choose(&mut rng).expect("non-empty");
        let entity = *pool.choose(&mut rng).expect("non-empty");
        let corrupted = if rng.random_bool(0.5) {
            Triple::new(entity, base.relation, base.tail)
        } else {
            Triple::new(base.head, base.relation, entity)
        };
        if corrupted == base
            || corrupted.is_self_loop()
            || kg.contains(&corrupted)
            || forbidden.contains(&corrupted)
            || !made.insert(corrupted)
        {
            continue;
        }
        negatives.push(LabeledTriple::new(corrupted, Label::Negative, Provenance::Corruption));
    }
    let shortfall = needed - negatives.len();
    CorruptionOutcome { negatives, shortfall }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalanceConfig {
    /// Largest share any hop, relation or pattern group may keep.
    pub max_share: f64,
    /// Largest share either the one-hop or the multi-hop group may keep.
    pub hop_parity_share: f64,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self { max_share: 0.4, hop_parity_share: 0.6, seed: 42 }
    }
}

/// Shortest path length of a candidate.
pub fn shortest_hops(paths: &[GroundedPath]) -> usize {
    paths.iter().map(|p| p.hops).min().unwrap_or(0)
}

/// Pattern of the candidate's first path (the shortest, most confident).
pub fn primary_pattern(paths: &[GroundedPath]) -> Pattern {
    paths.first().map_or(Pattern::Others, |p| p.pattern)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum GroupKey {
    Hop(usize),
    Relation(RelationId),
    /// Patterns are compared within their side of the one-hop/multi-hop
    /// divide, since each pattern only occurs on one side.
    Pattern(bool, Pattern),
    MultiHop(bool),
}

const HOP_AXIS: usize = 0;
const PATTERN_AXIS: usize = 2;
const PARITY_AXIS: usize = 3;

fn group_keys(paths: &[GroundedPath]) -> [GroupKey; 4] {
    let hops = shortest_hops(paths);
    let relation = paths.first().map_or(RelationId(0), |p| p.conclusion.relation);
    [
        GroupKey::Hop(hops),
        GroupKey::Relation(relation),
        GroupKey::Pattern(hops > 1, primary_pattern(paths)),
        GroupKey::MultiHop(hops > 1),
    ]
}

/// Population a group's share is taken over and the number of groups
/// competing for it. Path lengths are compared among multi-hop candidates
/// only; the one-hop group is governed by the parity axis alone.
fn share_base(counts: &[BTreeMap<GroupKey, usize>; 4], axis: usize, key: &GroupKey, total: usize) -> Option<(usize, usize)> {
    let side_count = |side: bool| counts[PARITY_AXIS].get(&GroupKey::MultiHop(side)).copied().unwrap_or(0);
    match *key {
        GroupKey::Hop(1) => None,
        GroupKey::Hop(_) => {
            let groups = counts[HOP_AXIS].keys().filter(|k| !matches!(k, GroupKey::Hop(1))).count();
            Some((side_count(true), groups))
        }
        GroupKey::Pattern(side, _) => {
            let groups = counts[PATTERN_AXIS].keys().filter(|k| matches!(k, GroupKey::Pattern(s, _) if *s == side)).count();
            Some((side_count(side), groups))
        }
        _ => Some((total, counts[axis].len())),
    }
}

/// Share cap actually applied on an axis with `groups` non-empty groups.
/// A cap below `1 / groups` could never be met.
pub fn effective_cap(cap: f64, groups: usize) -> f64 {
    if groups == 0 {
        cap
    } else {
        cap.max(1.0 / groups as f64)
    }
}

/// Randomly removes members of the frequent groups until each is within
/// its cap or has a single member. Frequent groups are those over their cap
/// in the incoming distribution; other groups only shrink as a side effect,
/// so a small group can never become a removal target. Pattern shares are
/// measured among candidates on the same side of the one-hop/multi-hop
/// divide and path-length shares among multi-hop candidates.
pub fn balance(
    candidates: &BTreeMap<Triple, Vec<GroundedPath>>,
    config: &BalanceConfig,
) -> BTreeMap<Triple, Vec<GroundedPath>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let items: Vec<(&Triple, [GroupKey; 4])> = candidates.iter().map(|(t, p)| (t, group_keys(p))).collect();
    let mut alive = vec![true; items.len()];
    let mut total = items.len();
    let mut counts: [BTreeMap<GroupKey, usize>; 4] = Default::default();
    // Members sharing all four keys always carry the same pressure, so the
    // victim search works on these buckets instead of single candidates.
    let mut buckets: Vec<([GroupKey; 4], Vec<usize>)> = Vec::new();
    let mut bucket_of: HashMap<[GroupKey; 4], usize> = HashMap::new();
    let mut buckets_with: HashMap<GroupKey, Vec<usize>> = HashMap::new();
    for (i, (_, keys)) in items.iter().enumerate() {
        for (axis, key) in keys.iter().enumerate() {
            *counts[axis].entry(*key).or_default() += 1;
        }
        let b = *bucket_of.entry(*keys).or_insert_with(|| {
            buckets.push((*keys, Vec::new()));
            for key in keys {
                buckets_with.entry(*key).or_default().push(buckets.len() - 1);
            }
            buckets.len() - 1
        });
        buckets[b].1.push(i);
    }
    let caps = [config.max_share, config.max_share, config.max_share, config.hop_parity_share];

    let over = |counts: &[BTreeMap<GroupKey, usize>; 4], axis: usize, key: &GroupKey, total: usize| {
        let n = counts[axis].get(key).copied().unwrap_or(0);
        share_base(counts, axis, key, total)
            .is_some_and(|(base, groups)| n > 1 && n as f64 > effective_cap(caps[axis], groups) * base as f64 + 1e-9)
    };
    let frequent: HashSet<(usize, GroupKey)> = counts
        .iter()
        .enumerate()
        .flat_map(|(axis, groups)| groups.keys().map(move |&key| (axis, key)))
        .filter(|(axis, key)| over(&counts, *axis, key, total))
        .collect();
    loop {
        let mut worst: Option<(usize, GroupKey)> = None;
        let mut hot: HashSet<(usize, GroupKey)> = HashSet::new();
        for (axis, groups) in counts.iter().enumerate() {
            for (&key, &n) in groups {
                if frequent.contains(&(axis, key)) && over(&counts, axis, &key, total) {
                    hot.insert((axis, key));
                    if worst.is_none_or(|(m, _)| n > m) {
                        worst = Some((n, key));
                    }
                }
            }
        }
        let Some((_, key)) = worst else { break };
        // Prefer members that are over-represented on other axes too, so
        // small groups are not drained as a side effect.
        let pressure = |keys: &[GroupKey; 4]| {
            keys.iter().enumerate().filter(|&(axis, k)| *k != key && hot.contains(&(axis, *k))).count()
        };
        let live: Vec<usize> = buckets_with[&key].iter().copied().filter(|&b| !buckets[b].1.is_empty()).collect();
        let best = live.iter().map(|&b| pressure(&buckets[b].0)).max().expect("group has live members");
        let pick: Vec<usize> = live.into_iter().filter(|&b| pressure(&buckets[b].0) == best).collect();
        let mut r = rng.random_range(0..pick.iter().map(|&b| buckets[b].1.len()).sum::<usize>());
        let mut chosen = None;
        for &b in &pick {
            let n = buckets[b].1.len();
            if r < n {
                chosen = Some(buckets[b].1.remove(r));
                break;
            }
            r -= n;
        }
        let victim = chosen.expect("draw lands in a bucket");
        alive[victim] = false;
        total -= 1;
        for (axis, key) in items[victim].1.iter().enumerate() {
            let n = counts[axis].get_mut(key).expect("counted");
            *n -= 1;
            if *n == 0 {
                counts[axis].remove(key);
            }
        }
    }
    items
        .iter()
        .zip(alive)
        .filter(|(_, a)| *a)
        .map(|((t, _), _)| (**t, candidates[*t].clone()))
        .collect()
}

/// Candidates found in `reference` become kg-auto positives; the rest are
/// returned for human annotation.
pub fn auto_label(
    candidates: &BTreeMap<Triple, Vec<GroundedPath>>,
    reference: &KnowledgeGraph,
) -> (Vec<LabeledTriple>, Vec<Triple>) {
    let mut positives = Vec::new();
    let mut unresolved = Vec::new();
    for (t, paths) in candidates {
        if reference.contains(t) {
            let mut l = LabeledTriple::new(*t, Label::Positive, Provenance::KgAuto);
            l.confidence = max_confidence(paths);
            positives.push(l);
        } else {
            unresolved.push(*t);
        }
    }
    (positives, unresolved)
}

pub fn max_confidence(paths: &[GroundedPath]) -> Option<f64> {
    paths.iter().map(|p| p.confidence).max_by(f64::total_cmp)
}

#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub vocab: Arc<Vocabulary>,
    pub train: BTreeSet<Triple>,
    pub valid: Vec<LabeledTriple>,
    pub test: Vec<LabeledTriple>,
    /// Paths of the labeled valid and test triples that have any.
    pub paths: BTreeMap<Triple, Vec<GroundedPath>>,
}

impl DatasetBundle {
    pub fn labeled(&self) -> impl Iterator<Item = &LabeledTriple> {
        self.valid.iter().chain(&self.test)
    }

    /// Checks disjointness, label consistency and the inferential guarantee.
    pub fn check(&self) -> Result<(), CurateError> {
        let mut seen = HashSet::new();
        for l in self.labeled() {
            l.check()?;
            if !seen.insert(l.triple) {
                return Err(CurateError::DuplicateLabel(l.triple));
            }
            if self.train.contains(&l.triple) {
                return Err(CurateError::Leak(l.triple));
            }
            if l.label == Label::Positive {
                let inside = self.paths.get(&l.triple).is_some_and(|paths| {
                    paths.iter().any(|p| p.premises.iter().all(|t| self.train.contains(t)))
                });
                if !inside {
                    return Err(CurateError::PositiveWithoutPath(l.triple));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssembleConfig {
    /// Confidence a positive must exceed to enter the dense sibling.
    pub dense_threshold: Option<f64>,
    /// Allowed gap between positives and non-positives, relative to the
    /// larger side.
    pub parity_tolerance: f64,
    pub seed: u64,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        Self { dense_threshold: Some(DEFAULT_DENSE_THRESHOLD), parity_tolerance: 0.1, seed: 42 }
    }
}

fn parity_ok(pos: usize, other: usize, tolerance: f64) -> bool {
    pos.abs_diff(other) as f64 <= tolerance * pos.max(other) as f64 + 1e-9
}

/// Trims the larger side until positives and non-positives are within
/// tolerance. Corruption negatives go before human labels. The result is
/// sorted by triple.
pub fn trim_parity(split: &mut Vec<LabeledTriple>, tolerance: f64, rng: &mut ChaCha8Rng) {
    split.shuffle(rng);
    // stable sort keeps the shuffled order inside each removal tier
    split.sort_by_key(|l| match (l.label, l.provenance) {
        (Label::Positive, _) => 0,
        (_, Provenance::Corruption) => 1,
        _ => 2,
    });
    let pos = split.iter().filter(|l| l.label == Label::Positive).count();
    let other = split.len() - pos;
    let (mut keep_pos, mut keep_other) = (pos, other);
    while !parity_ok(keep_pos, keep_other, tolerance) {
        if keep_pos > keep_other {
            keep_pos -= 1;
        } else {
            keep_other -= 1;
        }
    }
    let mut out: Vec<LabeledTriple> = split[..keep_pos].to_vec();
    let others = &split[pos..];
    out.extend_from_slice(&others[other - keep_other..]);
    out.sort_by_key(|l| l.triple);
    *split = out;
}

/// Alternately deals label-grouped triples into valid and test after a
/// seeded shuffle, so each half gets about half of every label.
fn halve(mut labeled: Vec<LabeledTriple>, rng: &mut ChaCha8Rng) -> (Vec<LabeledTriple>, Vec<LabeledTriple>) {
    labeled.shuffle(rng);
    labeled.sort_by_key(|l| (l.label, l.provenance));
    let (mut valid, mut test) = (Vec::new(), Vec::new());
    for (i, l) in labeled.into_iter().enumerate() {
        if i % 2 == 0 {
            valid.push(l);
        } else {
            test.push(l);
        }
    }
    valid.sort_by_key(|l| l.triple);
    test.sort_by_key(|l| l.triple);
    (valid, test)
}

fn bundle_paths(
    labeled: &[&LabeledTriple],
    paths: &BTreeMap<Triple, Vec<GroundedPath>>,
) -> BTreeMap<Triple, Vec<GroundedPath>> {
    labeled.iter().filter_map(|l| paths.get(&l.triple).map(|p| (l.triple, p.clone()))).collect()
}

/// Builds the final bundle (and the dense sibling when configured).
///
/// Paths whose premises are not all in `train` are discarded; a positive
/// left without a path is an error. Train triples touching an entity that
/// appears in no kept path are pruned. Labeled triples are halved into
/// valid and test and each half is trimmed to label parity.
pub fn assemble(
    vocab: Arc<Vocabulary>,
    train: &BTreeSet<Triple>,
    labeled: &[LabeledTriple],
    paths: &BTreeMap<Triple, Vec<GroundedPath>>,
    config: &AssembleConfig,
) -> Result<(DatasetBundle, Option<DatasetBundle>), CurateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen = HashSet::new();
    let mut kept_paths: BTreeMap<Triple, Vec<GroundedPath>> = BTreeMap::new();
    let mut labeled_out = Vec::with_capacity(labeled.len());
    for l in labeled {
        l.check()?;
        if !seen.insert(l.triple) {
            return Err(CurateError::DuplicateLabel(l.triple));
        }
        if train.contains(&l.triple) {
            return Err(CurateError::Leak(l.triple));
        }
        let inside: Vec<GroundedPath> = paths
            .get(&l.triple)
            .map(|ps| ps.iter().filter(|p| p.premises.iter().all(|t| train.contains(t))).cloned().collect())
            .unwrap_or_default();
        let mut l = l.clone();
        if l.label == Label::Positive {
            if inside.is_empty() {
                return Err(CurateError::PositiveWithoutPath(l.triple));
            }
            l.confidence = max_confidence(&inside);
        }
        if !inside.is_empty() {
            kept_paths.insert(l.triple, inside);
        }
        labeled_out.push(l);
    }

    let entities = path_entities(kept_paths.values().flatten());
    let pruned: BTreeSet<Triple> = train
        .iter()
        .filter(|t| entities.contains(&t.head) && entities.contains(&t.tail))
        .copied()
        .collect();

    let (mut valid, mut test) = halve(labeled_out, &mut rng);
    trim_parity(&mut valid, config.parity_tolerance, &mut rng);
    trim_parity(&mut test, config.parity_tolerance, &mut rng);

    let make = |valid: Vec<LabeledTriple>, test: Vec<LabeledTriple>| {
        let refs: Vec<&LabeledTriple> = valid.iter().chain(&test).collect();
        let paths = bundle_paths(&refs, &kept_paths);
        DatasetBundle { vocab: vocab.clone(), train: pruned.clone(), valid, test, paths }
    };

    let dense = config.dense_threshold.map(|threshold| {
        let mut dense_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        let keep = |l: &LabeledTriple| l.label != Label::Positive || l.confidence.is_some_and(|c| c > threshold);
        let mut dv: Vec<LabeledTriple> = valid.iter().filter(|l| keep(l)).cloned().collect();
        let mut dt: Vec<LabeledTriple> = test.iter().filter(|l| keep(l)).cloned().collect();
        trim_parity(&mut dv, config.parity_tolerance, &mut dense_rng);
        trim_parity(&mut dt, config.parity_tolerance, &mut dense_rng);
        make(dv, dt)
    });
    let bundle = make(valid, test);
    bundle.check()?;
    if let Some(d) = &dense {
        d.check()?;
    }
    Ok((bundle, dense))
}

/// Positive and non-positive counts of a split.
pub fn parity_counts(split: &[LabeledTriple]) -> (usize, usize) {
    let pos = split.iter().filter(|l| l.label == Label::Positive).count();
    (pos, split.len() - pos)
}

pub fn within_parity(split: &[LabeledTriple], tolerance: f64) -> bool {
    let (pos, other) = parity_counts(split);
    parity_ok(pos, other, tolerance)
}

/// Counts per key, in key order.
pub fn histogram<K: Ord + Hash + Clone>(keys: impl IntoIterator<Item = K>) -> BTreeMap<K, usize> {
    let mut out = BTreeMap::new();
    for k in keys {
        *out.entry(k).or_default() += 1;
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DistributionReport {
    pub train: usize,
    pub valid: BTreeMap<Label, usize>,
    pub test: BTreeMap<Label, usize>,
    pub max_hops: usize,
    /// Paths per pattern, over every path of every labeled triple.
    pub patterns: BTreeMap<Pattern, usize>,
    /// Labeled triples per shortest-path length.
    pub hops: BTreeMap<usize, usize>,
    pub relations: BTreeMap<String, usize>,
    pub labels: BTreeMap<Label, usize>,
    pub provenance: BTreeMap<Provenance, usize>,
}

pub fn stats(bundle: &DatasetBundle) -> DistributionReport {
    let count = |split: &[LabeledTriple]| {
        let mut m: BTreeMap<Label, usize> = [Label::Positive, Label::Negative, Label::Unknown].map(|l| (l, 0)).into();
        for l in split {
            *m.get_mut(&l.label).expect("all labels present") += 1;
        }
        m
    };
    let mut patterns: BTreeMap<Pattern, usize> = Pattern::ALL.map(|p| (p, 0)).into();
    let mut hops = BTreeMap::new();
    let mut max_hops = 0;
    for l in bundle.labeled() {
        if let Some(paths) = bundle.paths.get(&l.triple) {
            for p in paths {
                *patterns.get_mut(&p.pattern).expect("all patterns present") += 1;
                max_hops = max_hops.max(p.hops);
            }
            *hops.entry(shortest_hops(paths)).or_default() += 1;
        }
    }
    let valid = count(&bundle.valid);
    let test = count(&bundle.test);
    let labels = valid.iter().map(|(l, n)| (*l, n + test[l])).collect();
    DistributionReport {
        train: bundle.train.len(),
        valid,
        test,
        max_hops,
        patterns,
        hops,
        relations: histogram(bundle.labeled().map(|l| bundle.vocab.relation_label(l.triple.relation).to_owned())),
        labels,
        provenance: histogram(bundle.labeled().map(|l| l.provenance)),
    }
}

impl fmt::Display for DistributionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "train={}", self.train)?;
        for (name, split) in [("valid", &self.valid), ("test", &self.test)] {
            writeln!(f, "{name}={}", split.values().sum::<usize>())?;
            for (label, n) in split.iter().rev() {
                writeln!(f, "{name}.{}={n}", label_key(*label))?;
            }
        }
        writeln!(f, "max_hops={}", self.max_hops)?;
        writeln!(f, "\n[hist.pattern]")?;
        for (p, n) in &self.patterns {
            writeln!(f, "{p}={n}")?;
        }
        writeln!(f, "\n[hist.hop]")?;
        for (h, n) in &self.hops {
            writeln!(f, "{h}={n}")?;
        }
        writeln!(f, "\n[hist.relation]")?;
        for (r, n) in &self.relations {
            writeln!(f, "{r}={n}")?;
        }
        writeln!(f, "\n[hist.label]")?;
        for (l, n) in self.labels.iter().rev() {
            writeln!(f, "{l}={n}")?;
        }
        writeln!(f, "\n[hist.provenance]")?;
        for (p, n) in &self.provenance {
            writeln!(f, "{p}={n}")?;
        }
        Ok(())
    }
}

fn label_key(label: Label) -> &'static str {
    match label {
        Label::Positive => "pos",
        Label::Negative => "neg",
        Label::Unknown => "unk",
    }
}
