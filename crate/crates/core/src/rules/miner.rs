//! Anytime bottom-up rule mining.
//!
//! Each iteration samples a random walk that starts with one edge (the future
//! conclusion) and continues from one of its endpoints, generalizes the walk
//! into cyclic and single-constant rules, and scores every rule not seen
//! before by enumerating its premise groundings.

use std::collections::{BTreeMap, HashSet};
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::join::{ground_premise, instantiate};
use super::{Atom, Clause, HornRule, RuleError, RuleSet, Term};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

/// Longest premise the sampler will produce.
pub const MAX_RULE_HOPS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MineBudget {
    Seconds(f64),
    /// Reproducible alternative to wall-clock budgets.
    Iterations(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MineConfig {
    pub budget: MineBudget,
    pub lambda_min: f64,
    pub max_hops: usize,
    pub seed: u64,
    pub threads: usize,
    /// Maximum premise groundings enumerated per rule.
    pub grounding_cap: u64,
    /// Rules predicting fewer known triples than this are discarded.
    pub min_support: u64,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            budget: MineBudget::Seconds(500.0),
            lambda_min: 0.1,
            max_hops: 3,
            seed: 42,
            threads: 1,
            grounding_cap: 100_000,
            min_support: 2,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MineError {
    #[error("cannot mine rules from an empty graph")]
    EmptyGraph,
    #[error("mining budget must be positive")]
    EmptyBudget,
    #[error("max_hops must be within 1..={MAX_RULE_HOPS}, got {0}")]
    Hops(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MineReport {
    pub iterations: u64,
    /// Distinct candidate rules that were scored.
    pub candidates: usize,
    pub kept: usize,
    /// Candidates whose enumeration stopped at the grounding cap.
    pub cap_hits: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuleScore {
    pub support: u64,
    pub body_support: u64,
    pub confidence: f64,
    pub cap_hit: bool,
}

/// Random walk of up to `max_hops` steps after a uniformly drawn first edge.
/// Steps may traverse edges in either direction; no edge is used twice.
/// Returns `None` when the walk cannot take a single step.
pub fn sample_ground_path<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    max_hops: usize,
    rng: &mut R,
) -> Option<Vec<Triple>> {
    if kg.is_empty() || max_hops == 0 {
        return None;
    }
    let first = kg.triples()[rng.random_range(0..kg.len())];
    let mut current = if rng.random_bool(0.5) { first.head } else { first.tail };
    let hops = rng.random_range(1..=max_hops);
    let mut path = vec![first];
    for _ in 0..hops {
        let out = kg.out_edges(current);
        let inc = kg.in_edges(current);
        let options: Vec<Triple> = out
            .iter()
            .map(|&(r, t)| Triple::new(current, r, t))
            .chain(inc.iter().map(|&(r, h)| Triple::new(h, r, current)))
            .filter(|t| !path.contains(t))
            .collect();
        if options.is_empty() {
            break;
        }
        let step = options[rng.random_range(0..options.len())];
        current = step.other_end(current).expect("step is incident to the walk");
        path.push(step);
    }
    (path.len() >= 2).then_some(path)
}

/// Entity sequence of the walk over `steps` starting at `start`, if connected.
fn walk_entities(start: EntityId, steps: &[Triple]) -> Option<Vec<EntityId>> {
    let mut seq = vec![start];
    let mut current = start;
    for t in steps {
        current = t.other_end(current)?;
        seq.push(current);
    }
    Some(seq)
}

/// Premise atoms for a chain over `steps` visiting `entities`, with the
/// variable of every position given by `vars`.
fn chain_atoms(steps: &[Triple], entities: &[EntityId], vars: &[u8]) -> Vec<Atom> {
    steps
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let (from, to) = (Term::Var(vars[i]), Term::Var(vars[i + 1]));
            if t.head == entities[i] {
                Atom::new(t.relation, from, to)
            } else {
                Atom::new(t.relation, to, from)
            }
        })
        .collect()
}

const X: u8 = 0;
const Y: u8 = 1;

/// Generalizations of a walk whose first triple is the conclusion: the fully
/// variable (cyclic) rule when the walk closes on the other endpoint, and the
/// rules keeping the endpoint opposite to the walk's start constant.
pub fn generalize(path: &[Triple]) -> Result<Vec<Clause>, RuleError> {
    let Some((conclusion, steps)) = path.split_first() else {
        return Ok(Vec::new());
    };
    if steps.is_empty() {
        return Ok(Vec::new());
    }
    let starts = [conclusion.head, conclusion.tail];
    let walks: Vec<(EntityId, Vec<EntityId>)> = starts
        .iter()
        .filter_map(|&s| walk_entities(s, steps).map(|w| (s, w)))
        .collect();
    if walks.is_empty() {
        return Err(RuleError::DisconnectedPath);
    }
    if conclusion.is_self_loop() {
        return Ok(Vec::new());
    }
    let k = steps.len();
    let fresh = |n: usize| (2..2 + n as u8).collect::<Vec<_>>();
    let mut out = Vec::new();
    for (start, entities) in walks {
        let from_head = start == conclusion.head;
        let (start_var, other_var) = if from_head { (X, Y) } else { (Y, X) };
        let other = if from_head { conclusion.tail } else { conclusion.head };

        if entities[k] == other {
            let mut vars = vec![start_var];
            vars.extend(fresh(k - 1));
            vars.push(other_var);
            let mut premise = chain_atoms(steps, &entities, &vars);
            if !from_head {
                premise.reverse();
            }
            out.push(Clause::canonical(
                Atom::new(conclusion.relation, Term::Var(X), Term::Var(Y)),
                premise,
            ));
            // the closed walk read backwards starts at the other endpoint
            let rev_steps: Vec<Triple> = steps.iter().rev().copied().collect();
            let rev_entities: Vec<EntityId> = entities.iter().rev().copied().collect();
            out.push(constant_variant(conclusion, !from_head, &rev_steps, &rev_entities));
        }
        out.push(constant_variant(conclusion, from_head, steps, &entities));
    }
    let mut seen = HashSet::new();
    out.retain(|c| !c.is_trivial() && c.validate().is_ok() && seen.insert(c.clone()));
    Ok(out)
}

/// `r(X, c) <= chain from X` (or `r(c, Y) <= chain from Y`) with a dangling
/// final variable.
fn constant_variant(conclusion: &Triple, from_head: bool, steps: &[Triple], entities: &[EntityId]) -> Clause {
    let start_var = if from_head { X } else { Y };
    let mut vars = vec![start_var];
    vars.extend(2..2 + steps.len() as u8);
    let premise = chain_atoms(steps, entities, &vars);
    let head = if from_head {
        Atom::new(conclusion.relation, Term::Var(X), Term::Const(conclusion.tail))
    } else {
        Atom::new(conclusion.relation, Term::Const(conclusion.head), Term::Var(Y))
    };
    Clause::canonical(head, premise)
}

/// A premise that is a simple path of fresh variables starting at a
/// conclusion variable.
struct ChainPlan {
    start: u8,
    /// `(relation, forward)` per premise atom, walking away from `start`.
    steps: Vec<(RelationId, bool)>,
    /// The other conclusion variable for closed chains; `None` when the last
    /// variable dangles.
    end: Option<u8>,
}

fn chain_plan(clause: &Clause) -> Option<ChainPlan> {
    let cvars: Vec<u8> = clause.conclusion.terms().iter().filter_map(|t| t.var()).collect();
    if cvars.is_empty() || (cvars.len() == 2 && cvars[0] == cvars[1]) {
        return None;
    }
    'starts: for &start in &cvars {
        let other = cvars.iter().copied().find(|&v| v != start);
        let mut used = HashSet::from([start]);
        let mut current = start;
        let mut steps = Vec::new();
        let last = clause.premise.len() - 1;
        for (i, atom) in clause.premise.iter().enumerate() {
            let (Some(s), Some(o)) = (atom.subject.var(), atom.object.var()) else {
                return None;
            };
            if s == o {
                return None;
            }
            let (forward, next) = if s == current {
                (true, o)
            } else if o == current {
                (false, s)
            } else {
                continue 'starts;
            };
            let fresh = !used.contains(&next) && !cvars.contains(&next);
            let ok = if i < last { fresh } else { fresh || Some(next) == other };
            if !ok {
                continue 'starts;
            }
            used.insert(next);
            steps.push((atom.relation, forward));
            current = next;
        }
        let end = (Some(current) == other).then_some(current);
        if other.is_some() && end.is_none() {
            continue;
        }
        return Some(ChainPlan { start, steps, end });
    }
    None
}

fn advance(kg: &KnowledgeGraph, frontier: &[EntityId], relation: RelationId, forward: bool) -> Vec<EntityId> {
    let mut next: Vec<EntityId> = Vec::new();
    for &e in frontier {
        if forward {
            next.extend(kg.tails(e, relation));
        } else {
            next.extend(kg.heads(e, relation));
        }
    }
    next.sort_unstable();
    next.dedup();
    next
}

/// Entities that can occupy the start of the first chain step.
fn start_candidates(kg: &KnowledgeGraph, relation: RelationId, forward: bool) -> Vec<EntityId> {
    let mut c: Vec<EntityId> = kg
        .relation_triples(relation)
        .iter()
        .map(|t| if forward { t.head } else { t.tail })
        .collect();
    c.sort_unstable();
    c.dedup();
    c
}

/// Counts the distinct conclusion instantiations `(x, y)`, `x != y`, produced
/// by premise groundings (`body_support`) and how many of them are in the
/// graph (`support`). Enumeration stops once `grounding_cap` bodies are found.
pub fn score_rule(clause: &Clause, kg: &KnowledgeGraph, grounding_cap: u64) -> RuleScore {
    score_bounded(clause, kg, grounding_cap, f64::INFINITY).expect("unbounded scoring completes")
}

/// As [`score_rule`], giving up (`None`) once `body_support` exceeds
/// `body_limit`.
fn score_bounded(clause: &Clause, kg: &KnowledgeGraph, grounding_cap: u64, body_limit: f64) -> Option<RuleScore> {
    let mut support = 0u64;
    let mut body = 0u64;
    let mut cap_hit = false;
    let mut pruned = false;
    let conclusion = clause.conclusion;
    let mut record = |x: EntityId, y: EntityId| -> ControlFlow<()> {
        if x == y {
            return ControlFlow::Continue(());
        }
        if body >= grounding_cap {
            cap_hit = true;
            return ControlFlow::Break(());
        }
        body += 1;
        if body as f64 > body_limit {
            pruned = true;
            return ControlFlow::Break(());
        }
        if kg.contains(&Triple::new(x, conclusion.relation, y)) {
            support += 1;
        }
        ControlFlow::Continue(())
    };

    if let Some(plan) = chain_plan(clause) {
        let (first_rel, first_fwd) = plan.steps[0];
        for a in start_candidates(kg, first_rel, first_fwd) {
            let mut frontier = vec![a];
            for &(rel, fwd) in &plan.steps {
                frontier = advance(kg, &frontier, rel, fwd);
                if frontier.is_empty() {
                    break;
                }
            }
            if frontier.is_empty() {
                continue;
            }
            let flow = match plan.end {
                Some(_) if conclusion.subject == Term::Var(plan.start) => {
                    frontier.iter().try_for_each(|&b| record(a, b))
                }
                Some(_) => frontier.iter().try_for_each(|&b| record(b, a)),
                None => match (conclusion.subject, conclusion.object) {
                    (Term::Var(_), Term::Const(c)) => record(a, c),
                    (Term::Const(c), Term::Var(_)) => record(c, a),
                    _ => unreachable!("single-variable conclusion"),
                },
            };
            if flow.is_break() {
                break;
            }
        }
    } else {
        let mut seen = HashSet::new();
        let mut binding = vec![None; clause.variable_count()];
        let _ = ground_premise(kg, &clause.premise, &mut binding, &mut |b| {
            let t = instantiate(&conclusion, b).expect("conclusion variables occur in the premise");
            if seen.insert((t.head, t.tail)) {
                record(t.head, t.tail)
            } else {
                ControlFlow::Continue(())
            }
        });
    }
    if pruned {
        return None;
    }
    let confidence = if body == 0 { 0.0 } else { support as f64 / body as f64 };
    Some(RuleScore { support, body_support: body, confidence, cap_hit })
}

/// Number of distinct graph triples matching the conclusion (`x != y`) that
/// have a premise grounding. This is the uncapped support.
fn exact_support(clause: &Clause, kg: &KnowledgeGraph) -> u64 {
    let c = clause.conclusion;
    let matching: Box<dyn Iterator<Item = Triple> + '_> = match (c.subject, c.object) {
        (Term::Const(h), _) => Box::new(kg.tails(h, c.relation).map(move |t| Triple::new(h, c.relation, t))),
        (_, Term::Const(t)) => Box::new(kg.heads(t, c.relation).map(move |h| Triple::new(h, c.relation, t))),
        _ => Box::new(kg.relation_triples(c.relation).iter().copied()),
    };
    let mut found = 0;
    for t in matching {
        if t.is_self_loop() {
            continue;
        }
        let mut binding = vec![None; clause.variable_count()];
        let mut consistent = true;
        for (term, e) in [(c.subject, t.head), (c.object, t.tail)] {
            match term {
                Term::Const(k) => consistent &= k == e,
                Term::Var(v) => match binding[v as usize] {
                    Some(b) => consistent &= b == e,
                    None => binding[v as usize] = Some(e),
                },
            }
        }
        if consistent && ground_premise(kg, &clause.premise, &mut binding, &mut |_| ControlFlow::Break(())).is_break() {
            found += 1;
        }
    }
    found
}

struct WorkerResult {
    scored: HashSet<Clause>,
    kept: BTreeMap<Clause, HornRule>,
    iterations: u64,
    cap_hits: usize,
}

fn run_worker(kg: &KnowledgeGraph, config: &MineConfig, seed: u64, budget: MineBudget) -> WorkerResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scored = HashSet::new();
    let mut kept = BTreeMap::new();
    let mut cap_hits = 0;
    let started = Instant::now();
    let mut iterations = 0u64;
    loop {
        match budget {
            MineBudget::Iterations(n) if iterations >= n => break,
            MineBudget::Seconds(s) if started.elapsed() >= Duration::from_secs_f64(s) => break,
            _ => {}
        }
        iterations += 1;
        let Some(path) = sample_ground_path(kg, config.max_hops, &mut rng) else {
            continue;
        };
        let Ok(candidates) = generalize(&path) else {
            continue;
        };
        for clause in candidates {
            if scored.contains(&clause) {
                continue;
            }
            // Capped support never exceeds the exact one, so a rule whose
            // body outgrows support / lambda_min can be dropped early.
            let support = exact_support(&clause, kg);
            let body_limit = if config.lambda_min > 0.0 { support as f64 / config.lambda_min } else { f64::INFINITY };
            if support < config.min_support.max(1) {
                scored.insert(clause);
                continue;
            }
            let Some(score) = score_bounded(&clause, kg, config.grounding_cap, body_limit) else {
                scored.insert(clause);
                continue;
            };
            cap_hits += score.cap_hit as usize;
            if score.body_support > 0
                && score.support >= config.min_support.max(1)
                && score.confidence >= config.lambda_min
            {
                if let Ok(rule) = HornRule::new(clause.clone(), score.support, score.body_support) {
                    kept.insert(clause.clone(), rule);
                }
            }
            scored.insert(clause);
        }
    }
    WorkerResult { scored, kept, iterations, cap_hits }
}

/// Mines rules until the budget is spent. Workers sample independently with
/// seeds derived from `config.seed` and their results are merged by union, so
/// an iteration budget with one thread is fully reproducible.
pub fn mine(kg: &KnowledgeGraph, config: &MineConfig) -> Result<(RuleSet, MineReport), MineError> {
    if kg.is_empty() {
        return Err(MineError::EmptyGraph);
    }
    if !(1..=MAX_RULE_HOPS).contains(&config.max_hops) {
        return Err(MineError::Hops(config.max_hops));
    }
    match config.budget {
        MineBudget::Iterations(0) => return Err(MineError::EmptyBudget),
        MineBudget::Seconds(s) if !(s > 0.0) => return Err(MineError::EmptyBudget),
        _ => {}
    }
    let threads = config.threads.max(1);
    let budget_for = |w: usize| match config.budget {
        MineBudget::Iterations(n) => {
            let base = n / threads as u64;
            MineBudget::Iterations(base + u64::from((w as u64) < n % threads as u64))
        }
        b => b,
    };
    let seed_for = |w: usize| config.seed.wrapping_add((w as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let results: Vec<WorkerResult> = if threads == 1 {
        vec![run_worker(kg, config, config.seed, config.budget)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| scope.spawn(move || run_worker(kg, config, seed_for(w), budget_for(w))))
                .collect();
            handles.into_iter().map(|h| h.join().expect("mining worker panicked")).collect()
        })
    };

    let mut report = MineReport::default();
    let mut scored: HashSet<&Clause> = HashSet::new();
    let mut kept: BTreeMap<Clause, HornRule> = BTreeMap::new();
    for r in &results {
        report.iterations += r.iterations;
        report.cap_hits += r.cap_hits;
        scored.extend(r.scored.iter());
    }
    for r in results.iter() {
        for (clause, rule) in &r.kept {
            kept.entry(clause.clone()).or_insert_with(|| rule.clone());
        }
    }
    report.candidates = scored.len();
    let mut rules: Vec<HornRule> = kept.into_values().collect();
    rules.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(b.support.cmp(&a.support))
            .then_with(|| a.clause.cmp(&b.clause))
    });
    let set = RuleSet::new(rules);
    report.kept = set.len();
    log::info!(
        "mined {} rules from {} candidates in {} iterations",
        report.kept,
        report.candidates,
        report.iterations
    );
    Ok((set, report))
}
