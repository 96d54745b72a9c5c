//! Rule-guided train/test construction.
//!
//! Rules are grounded over the dataset corpus. Premise triples become
//! training data and instantiated conclusions become test candidates, so
//! every candidate comes with at least one supporting path inside train.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, Triple};
use crate::rules::join::{ground_premise, instantiate};
use crate::rules::{Atom, HornRule, RuleId, RuleSet, Term};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Symmetry,
    Inversion,
    Hierarchy,
    Composition,
    Others,
}

impl Pattern {
    pub const ALL: [Pattern; 5] =
        [Pattern::Symmetry, Pattern::Inversion, Pattern::Hierarchy, Pattern::Composition, Pattern::Others];

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::Symmetry => "symmetry",
            Pattern::Inversion => "inversion",
            Pattern::Hierarchy => "hierarchy",
            Pattern::Composition => "composition",
            Pattern::Others => "others",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pattern::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown pattern `{s}`"))
    }
}

/// Supporting evidence for one test triple.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundedPath {
    pub conclusion: Triple,
    pub premises: Vec<Triple>,
    pub rules_used: Vec<RuleId>,
    /// Product of the confidences of `rules_used`.
    pub confidence: f64,
    pub hops: usize,
    pub pattern: Pattern,
}

impl GroundedPath {
    fn from_grounding(grounding: Grounding, rule_id: RuleId, rules: &RuleSet) -> Self {
        let mut path = Self {
            conclusion: grounding.conclusion,
            hops: grounding.premises.len(),
            premises: grounding.premises,
            rules_used: vec![rule_id],
            confidence: rules[rule_id].confidence,
            pattern: Pattern::Others,
        };
        path.pattern = classify_pattern(&path, rules);
        path
    }

    /// Shorter first, then more confident, then by content.
    fn order(a: &Self, b: &Self) -> std::cmp::Ordering {
        a.hops
            .cmp(&b.hops)
            .then(b.confidence.total_cmp(&a.confidence))
            .then_with(|| a.premises.cmp(&b.premises))
            .then_with(|| a.rules_used.cmp(&b.rules_used))
    }

    fn premise_key(&self) -> Vec<Triple> {
        let mut key = self.premises.clone();
        key.sort_unstable();
        key
    }
}

/// Premise triples of one rule instance and the conclusion they imply.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Grounding {
    pub premises: Vec<Triple>,
    pub conclusion: Triple,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InferentialSplit {
    pub train: BTreeSet<Triple>,
    /// Paths per candidate, shortest first.
    pub candidates: BTreeMap<Triple, Vec<GroundedPath>>,
}

impl InferentialSplit {
    pub fn path_count(&self) -> usize {
        self.candidates.values().map(Vec::len).sum()
    }

    pub fn paths(&self) -> impl Iterator<Item = &GroundedPath> {
        self.candidates.values().flatten()
    }

    /// Checks that paths are non-empty, every premise is in train, and train
    /// and candidates are disjoint. Returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (c, paths) in &self.candidates {
            if self.train.contains(c) {
                return Err(format!("candidate {c:?} is in train"));
            }
            if paths.is_empty() {
                return Err(format!("candidate {c:?} has no path"));
            }
            for p in paths {
                if p.conclusion != *c {
                    return Err(format!("path filed under the wrong conclusion {c:?}"));
                }
                if p.premises.contains(c) {
                    return Err(format!("conclusion {c:?} is its own premise"));
                }
                if let Some(missing) = p.premises.iter().find(|t| !self.train.contains(t)) {
                    return Err(format!("premise {missing:?} of {c:?} is not in train"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("no rule produced a usable grounding; try a lower lambda_min or a longer mining budget")]
    NoGroundings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitConfig {
    /// Seed for the order in which candidate conclusions are admitted.
    pub seed: u64,
    /// Maximum groundings enumerated per rule.
    pub grounding_cap: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { seed: 42, grounding_cap: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtendConfig {
    /// Maximum hops a path may gain over its length before extension.
    pub max_extra_hops: usize,
    /// Probability that a path is picked for extension in each round.
    pub extend_fraction: f64,
    pub seed: u64,
    /// Substituting groundings considered per premise.
    pub max_substitutions: usize,
}

impl Default for ExtendConfig {
    fn default() -> Self {
        Self { max_extra_hops: 5, extend_fraction: 0.15, seed: 42, max_substitutions: 32 }
    }
}

fn ground_with(
    rule: &HornRule,
    kg: &KnowledgeGraph,
    binding: &mut Vec<Option<EntityId>>,
    cap: usize,
) -> (Vec<Grounding>, bool) {
    let mut out = Vec::new();
    let mut capped = false;
    let premise = rule.premise();
    let _ = ground_premise(kg, premise, binding, &mut |b| {
        let conclusion = instantiate(rule.conclusion(), b).expect("conclusion variables occur in the premise");
        if conclusion.is_self_loop() {
            return ControlFlow::Continue(());
        }
        let premises: Vec<Triple> =
            premise.iter().map(|a| instantiate(a, b).expect("premise fully bound")).collect();
        if premises.contains(&conclusion) {
            return ControlFlow::Continue(());
        }
        if out.len() >= cap {
            capped = true;
            return ControlFlow::Break(());
        }
        out.push(Grounding { premises, conclusion });
        ControlFlow::Continue(())
    });
    (out, capped)
}

/// Every instance of the rule's premise in `kg`, with the instantiated
/// conclusion (which need not be in `kg`). Instances whose conclusion is a
/// self-loop or repeats one of its own premises are dropped.
pub fn ground_rule(rule: &HornRule, kg: &KnowledgeGraph) -> Vec<Grounding> {
    ground_rule_capped(rule, kg, usize::MAX).0
}

/// As [`ground_rule`], stopping after `cap` groundings; the flag reports
/// whether the cap was hit.
pub fn ground_rule_capped(rule: &HornRule, kg: &KnowledgeGraph, cap: usize) -> (Vec<Grounding>, bool) {
    let mut binding = vec![None; rule.clause.variable_count()];
    ground_with(rule, kg, &mut binding, cap)
}

/// Groundings of `rule` whose conclusion is exactly `target`.
pub fn ground_concluding(rule: &HornRule, kg: &KnowledgeGraph, target: Triple, cap: usize) -> Vec<Grounding> {
    let conclusion = rule.conclusion();
    if conclusion.relation != target.relation || target.is_self_loop() {
        return Vec::new();
    }
    let mut binding = vec![None; rule.clause.variable_count()];
    for (term, entity) in [(conclusion.subject, target.head), (conclusion.object, target.tail)] {
        match term {
            Term::Const(c) if c != entity => return Vec::new(),
            Term::Const(_) => {}
            Term::Var(v) => match binding[v as usize] {
                Some(e) if e != entity => return Vec::new(),
                _ => binding[v as usize] = Some(entity),
            },
        }
    }
    ground_with(rule, kg, &mut binding, cap).0
}

/// Whether the premises can be walked as a trail from the conclusion's head
/// to its tail, using each premise exactly once.
fn forms_trail(conclusion: &Triple, premises: &[Triple]) -> bool {
    fn walk(at: EntityId, goal: EntityId, premises: &[Triple], used: &mut Vec<bool>, left: usize) -> bool {
        if left == 0 {
            return at == goal;
        }
        for i in 0..premises.len() {
            if used[i] {
                continue;
            }
            if let Some(next) = premises[i].other_end(at) {
                used[i] = true;
                let found = walk(next, goal, premises, used, left - 1);
                used[i] = false;
                if found {
                    return true;
                }
            }
        }
        false
    }
    let mut used = vec![false; premises.len()];
    walk(conclusion.head, conclusion.tail, premises, &mut used, premises.len())
}

fn is_closed(rule: &HornRule) -> bool {
    rule.conclusion().subject.var().is_some() && rule.conclusion().object.var().is_some()
}

/// Relation-pattern tag of a path.
///
/// One-hop paths: same relation with swapped arguments is symmetry; a
/// different relation with swapped arguments is inversion when the rule set
/// also holds the reverse implication, otherwise hierarchy, as is any other
/// one-hop path. Multi-hop paths built only from closed rules whose premises
/// chain from head to tail are composition; anything else is others.
pub fn classify_pattern(path: &GroundedPath, rules: &RuleSet) -> Pattern {
    let c = path.conclusion;
    if path.premises.len() == 1 {
        let p = path.premises[0];
        let swapped = p.head == c.tail && p.tail == c.head;
        if swapped && p.relation == c.relation {
            return Pattern::Symmetry;
        }
        if swapped {
            let (x, y) = (Term::Var(0), Term::Var(1));
            let reverse = rules.find(Atom::new(p.relation, x, y), vec![Atom::new(c.relation, y, x)]);
            if reverse.is_some() {
                return Pattern::Inversion;
            }
        }
        return Pattern::Hierarchy;
    }
    let closed = !path.rules_used.is_empty()
        && path.rules_used.iter().all(|&id| rules.get(id).is_some_and(is_closed));
    if closed && forms_trail(&c, &path.premises) {
        Pattern::Composition
    } else {
        Pattern::Others
    }
}

fn all_groundings(kg: &KnowledgeGraph, rules: &RuleSet, cap: usize) -> Vec<GroundedPath> {
    let per_rule: Vec<Vec<GroundedPath>> = rules
        .rules()
        .par_iter()
        .enumerate()
        .map(|(i, rule)| {
            let id = RuleId(i as u32);
            let (groundings, capped) = ground_rule_capped(rule, kg, cap);
            if capped {
                log::warn!("rule {i} hit the grounding cap of {cap}");
            }
            groundings.into_iter().map(|g| GroundedPath::from_grounding(g, id, rules)).collect()
        })
        .collect();
    per_rule.into_iter().flatten().collect()
}

/// Sorts each candidate's paths and drops paths with the same premise set,
/// keeping the first in path order.
fn normalize(candidates: &mut BTreeMap<Triple, Vec<GroundedPath>>) {
    for paths in candidates.values_mut() {
        paths.sort_by(GroundedPath::order);
        let mut seen = HashSet::new();
        paths.retain(|p| seen.insert(p.premise_key()));
    }
    candidates.retain(|_, paths| !paths.is_empty());
}

/// Grounds every rule over `kg` and admits paths in seeded random order.
///
/// A path is admitted when its conclusion is not already a training triple
/// and none of its premises is an admitted conclusion. Admitted conclusions
/// are never used as training triples, so paths depending on them are
/// dropped. A second pass adds alternative paths for admitted conclusions.
pub fn build_split(kg: &KnowledgeGraph, rules: &RuleSet, config: &SplitConfig) -> Result<InferentialSplit, SplitError> {
    let mut paths = all_groundings(kg, rules, config.grounding_cap);
    if paths.is_empty() {
        return Err(SplitError::NoGroundings);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    paths.shuffle(&mut rng);

    let mut train: HashSet<Triple> = HashSet::new();
    let mut test: HashSet<Triple> = HashSet::new();
    let mut accepted = vec![false; paths.len()];
    for pass in 0..2 {
        for (i, path) in paths.iter().enumerate() {
            if accepted[i] || train.contains(&path.conclusion) {
                continue;
            }
            if pass == 1 && !test.contains(&path.conclusion) {
                continue;
            }
            if path.premises.iter().any(|p| test.contains(p)) {
                continue;
            }
            accepted[i] = true;
            test.insert(path.conclusion);
            train.extend(path.premises.iter().copied());
        }
    }

    let mut candidates: BTreeMap<Triple, Vec<GroundedPath>> = BTreeMap::new();
    for (path, ok) in paths.into_iter().zip(accepted) {
        if ok {
            candidates.entry(path.conclusion).or_default().push(path);
        }
    }
    normalize(&mut candidates);
    let train = candidates.values().flatten().flat_map(|p| p.premises.iter().copied()).collect();
    let split = InferentialSplit { train, candidates };
    debug_assert_eq!(split.check_invariants(), Ok(()));
    log::info!("split: {} train triples, {} candidates", split.train.len(), split.candidates.len());
    Ok(split)
}

/// Caches the groundings that conclude a given triple.
struct Substitutions<'a> {
    kg: &'a KnowledgeGraph,
    rules: &'a RuleSet,
    cap: usize,
    cache: HashMap<Triple, Vec<(RuleId, Vec<Triple>)>>,
}

impl<'a> Substitutions<'a> {
    fn new(kg: &'a KnowledgeGraph, rules: &'a RuleSet, cap: usize) -> Self {
        Self { kg, rules, cap, cache: HashMap::new() }
    }

    fn of(&mut self, target: Triple) -> &[(RuleId, Vec<Triple>)] {
        let (kg, rules, cap) = (self.kg, self.rules, self.cap);
        self.cache.entry(target).or_insert_with(|| {
            let mut out = Vec::new();
            for &id in rules.concluding(target.relation) {
                for g in ground_concluding(&rules[id], kg, target, cap) {
                    if out.len() >= cap {
                        return out;
                    }
                    out.push((id, g.premises));
                }
            }
            out
        })
    }

}

/// Orients a replacement chain so that it continues the walk arriving at
/// `entry` (one end of the replaced triple).
fn orient(replacement: &[Triple], entry: EntityId) -> Vec<Triple> {
    let mut at = entry;
    let mut forward = true;
    for t in replacement {
        match t.other_end(at) {
            Some(next) => at = next,
            None => {
                forward = false;
                break;
            }
        }
    }
    if forward {
        replacement.to_vec()
    } else {
        replacement.iter().rev().copied().collect()
    }
}

/// Entity at which a head-to-tail walk over `premises` reaches index `i`.
fn entry_point(conclusion: &Triple, premises: &[Triple], i: usize) -> EntityId {
    let mut at = conclusion.head;
    for t in &premises[..i] {
        match t.other_end(at) {
            Some(next) => at = next,
            None => return premises[i].head,
        }
    }
    if premises[i].other_end(at).is_some() {
        at
    } else {
        premises[i].head
    }
}

/// Lengthens paths by replacing one premise with the premises of a grounding
/// that concludes it, and adds alternative one-rule paths for candidates.
///
/// Replacement premises must come from `kg`, must not be candidates, and
/// must not repeat the path's conclusion or its other premises. A path never
/// grows by more than `max_extra_hops` over its original length. Train is
/// recomputed as the union of surviving premises, so a replaced triple stays
/// in train only while another path needs it.
pub fn extend_paths(
    split: &InferentialSplit,
    rules: &RuleSet,
    kg: &KnowledgeGraph,
    config: &ExtendConfig,
) -> InferentialSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut subs = Substitutions::new(kg, rules, config.max_substitutions);
    let is_candidate = |t: &Triple| split.candidates.contains_key(t);
    let mut candidates = split.candidates.clone();

    // alternative paths from other rules concluding the same triple
    for (conclusion, paths) in candidates.iter_mut() {
        for (id, premises) in subs.of(*conclusion).to_vec() {
            if premises.iter().any(is_candidate) {
                continue;
            }
            let g = Grounding { premises, conclusion: *conclusion };
            paths.push(GroundedPath::from_grounding(g, id, rules));
        }
    }
    normalize(&mut candidates);

    // substitutions per premise that avoid every candidate
    let mut usable: HashMap<Triple, Vec<(RuleId, Vec<Triple>)>> = HashMap::new();
    for _round in 0..config.max_extra_hops {
        let mut changed = false;
        for (conclusion, paths) in candidates.iter_mut() {
            for path in paths.iter_mut() {
                if !rng.random_bool(config.extend_fraction) {
                    continue;
                }
                let base = rules[path.rules_used[0]].premise().len();
                for premise in &path.premises {
                    usable.entry(*premise).or_insert_with(|| {
                        let mut found = subs.of(*premise).to_vec();
                        found.retain(|(_, repl)| !repl.iter().any(is_candidate));
                        found
                    });
                }
                let mut options = Vec::new();
                for (i, premise) in path.premises.iter().enumerate() {
                    for (k, (_, repl)) in usable[premise].iter().enumerate() {
                        let grows = repl.len() - 1;
                        if path.hops + grows > base + config.max_extra_hops {
                            continue;
                        }
                        if !repl.iter().any(|t| t == conclusion || path.premises.contains(t)) {
                            options.push((i, k));
                        }
                    }
                }
                if options.is_empty() {
                    continue;
                }
                let (i, k) = options[rng.random_range(0..options.len())];
                let (id, repl) = &usable[&path.premises[i]][k];
                let (id, repl) = (*id, repl.clone());
                let entry = entry_point(conclusion, &path.premises, i);
                let repl = orient(&repl, entry);
                path.premises.splice(i..=i, repl);
                path.hops = path.premises.len();
                path.rules_used.push(id);
                path.confidence *= rules[id].confidence;
                path.pattern = classify_pattern(path, rules);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    normalize(&mut candidates);
    let train = candidates.values().flatten().flat_map(|p| p.premises.iter().copied()).collect();
    let out = InferentialSplit { train, candidates };
    debug_assert_eq!(out.check_invariants(), Ok(()));
    out
}

/// For an existing train/test division: keeps the candidates that have at
/// least one rule grounding with every premise in `train`, together with
/// those paths. Candidates already in `train` are dropped.
pub fn retain_inferential(
    train: &KnowledgeGraph,
    rules: &RuleSet,
    candidates: impl IntoIterator<Item = Triple>,
    cap: usize,
) -> BTreeMap<Triple, Vec<GroundedPath>> {
    let mut out = BTreeMap::new();
    let mut subs = Substitutions::new(train, rules, cap);
    for c in candidates {
        if train.contains(&c) {
            continue;
        }
        let paths: Vec<GroundedPath> = subs
            .of(c)
            .iter()
            .map(|(id, premises)| {
                GroundedPath::from_grounding(Grounding { premises: premises.clone(), conclusion: c }, *id, rules)
            })
            .collect();
        if !paths.is_empty() {
            out.insert(c, paths);
        }
    }
    normalize(&mut out);
    out
}

/// Entities mentioned by any path (conclusions and premises).
pub fn path_entities<'a>(paths: impl IntoIterator<Item = &'a GroundedPath>) -> BTreeSet<EntityId> {
    let mut out = BTreeSet::new();
    for p in paths {
        out.insert(p.conclusion.head);
        out.insert(p.conclusion.tail);
        for t in &p.premises {
            out.insert(t.head);
            out.insert(t.tail);
        }
    }
    out
}
