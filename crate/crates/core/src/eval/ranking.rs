use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::ControlFlow;

use rayon::prelude::*;

use super::{missing_scores, EvalError, ScoreTable};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple, Vocabulary};
use crate::rules::join::ground_premise;
use crate::rules::{RuleSet, Term};

/// Primary score and tiebreak score; compared lexicographically, higher
/// is better.
pub type ScoreKey = (f64, f64);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Query {
    /// `(head, relation, ?)`
    Tail { head: EntityId, relation: RelationId },
    /// `(?, relation, tail)`
    Head { relation: RelationId, tail: EntityId },
}

impl Query {
    pub fn completed(self, entity: EntityId) -> Triple {
        match self {
            Query::Tail { head, relation } => Triple::new(head, relation, entity),
            Query::Head { relation, tail } => Triple::new(entity, relation, tail),
        }
    }

    pub fn relation(self) -> RelationId {
        match self {
            Query::Tail { relation, .. } | Query::Head { relation, .. } => relation,
        }
    }

    pub fn bound(self) -> EntityId {
        match self {
            Query::Tail { head, .. } => head,
            Query::Head { tail, .. } => tail,
        }
    }

    /// The tail query then the head query of a triple, with the gold answers.
    pub fn both(t: Triple) -> [(Query, EntityId); 2] {
        [
            (Query::Tail { head: t.head, relation: t.relation }, t.tail),
            (Query::Head { relation: t.relation, tail: t.tail }, t.head),
        ]
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Tail { .. } => f.write_str("tail"),
            Query::Head { .. } => f.write_str("head"),
        }
    }
}

/// Scores every entity as the answer to a query.
pub trait QueryScorer: Sync {
    fn score_query(&self, query: Query, entities: usize) -> Result<Vec<ScoreKey>, EvalError>;
}

pub struct TableScorer<'a> {
    pub table: &'a ScoreTable,
    pub vocab: &'a Vocabulary,
}

impl QueryScorer for TableScorer<'_> {
    fn score_query(&self, query: Query, entities: usize) -> Result<Vec<ScoreKey>, EvalError> {
        let mut out = Vec::with_capacity(entities);
        let mut missing = Vec::new();
        for e in 0..entities {
            let t = query.completed(EntityId(e as u32));
            match self.table.get(&t) {
                Some(s) => out.push((s, 0.0)),
                None => missing.push(t),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(missing_scores(&missing, self.vocab))
        }
    }
}

/// Ranks the answers proposed by rules concluding the query relation.
///
/// An entity is proposed by a rule when some grounding of the rule with the
/// bound side fixed yields it. Its key is the highest confidence among the
/// proposing rules, then the second highest (0 if only one). The result is
/// ordered by key descending, then entity id. The bound entity itself is
/// never proposed. At most `cap` groundings are enumerated per rule.
pub fn rule_predict(train: &KnowledgeGraph, rules: &RuleSet, query: Query, cap: usize) -> Vec<(EntityId, ScoreKey)> {
    let mut best: HashMap<EntityId, ScoreKey> = HashMap::new();
    let bound = query.bound();
    for &id in rules.concluding(query.relation()) {
        let rule = &rules[id];
        let conclusion = rule.conclusion();
        let (fixed, open) = match query {
            Query::Tail { .. } => (conclusion.subject, conclusion.object),
            Query::Head { .. } => (conclusion.object, conclusion.subject),
        };
        let mut binding = vec![None; rule.clause.variable_count()];
        match fixed {
            Term::Const(c) if c != bound => continue,
            Term::Const(_) => {}
            Term::Var(v) => binding[v as usize] = Some(bound),
        }
        let mut proposed: HashSet<EntityId> = HashSet::new();
        let mut seen = 0usize;
        let _ = ground_premise(train, rule.premise(), &mut binding, &mut |b| {
            let candidate = match open {
                Term::Const(c) => c,
                Term::Var(v) => b[v as usize].expect("conclusion variables occur in the premise"),
            };
            if candidate != bound {
                proposed.insert(candidate);
            }
            seen += 1;
            if seen >= cap || open.is_const() {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        for e in proposed {
            let key = best.entry(e).or_insert((0.0, 0.0));
            if rule.confidence > key.0 {
                *key = (rule.confidence, key.0);
            } else if rule.confidence > key.1 {
                key.1 = rule.confidence;
            }
        }
    }
    let mut ranked: Vec<(EntityId, ScoreKey)> = best.into_iter().collect();
    ranked.sort_by(|a, b| {
        b.1 .0.total_cmp(&a.1 .0).then(b.1 .1.total_cmp(&a.1 .1)).then(a.0.cmp(&b.0))
    });
    ranked
}

pub struct RuleScorer<'a> {
    pub train: &'a KnowledgeGraph,
    pub rules: &'a RuleSet,
    pub cap: usize,
}

impl QueryScorer for RuleScorer<'_> {
    fn score_query(&self, query: Query, entities: usize) -> Result<Vec<ScoreKey>, EvalError> {
        let mut out = vec![(0.0, 0.0); entities];
        for (e, key) in rule_predict(self.train, self.rules, query, self.cap) {
            if e.index() < entities {
                out[e.index()] = key;
            }
        }
        Ok(out)
    }
}

/// Known triples removed from rankings. Gold triples are never filtered;
/// a gold triple found in `train` means the filter set is wrong.
#[derive(Clone, Debug, Default)]
pub struct Filter {
    pub train: HashSet<Triple>,
    /// Further known triples, typically valid and test.
    pub extra: HashSet<Triple>,
}

impl Filter {
    pub fn train_only(train: impl IntoIterator<Item = Triple>) -> Self {
        Self { train: train.into_iter().collect(), extra: HashSet::new() }
    }

    pub fn is_filtered(&self, candidate: &Triple, gold: &Triple) -> bool {
        candidate != gold && (self.train.contains(candidate) || self.extra.contains(candidate))
    }

    pub fn name(&self) -> &'static str {
        if self.extra.is_empty() {
            "train"
        } else {
            "train+valid+test"
        }
    }
}

/// Average rank of `gold` among entities not excluded: one plus the number
/// scoring higher plus half the number tying. Returns the rank and the
/// number of ranked candidates.
pub fn rank_of(keys: &[ScoreKey], gold: usize, excluded: impl Fn(usize) -> bool) -> (f64, usize) {
    let g = keys[gold];
    let (mut higher, mut ties, mut candidates) = (0usize, 0usize, 0usize);
    for (e, k) in keys.iter().enumerate() {
        if e == gold {
            candidates += 1;
            continue;
        }
        if excluded(e) {
            continue;
        }
        candidates += 1;
        match k.0.total_cmp(&g.0).then(k.1.total_cmp(&g.1)) {
            std::cmp::Ordering::Greater => higher += 1,
            std::cmp::Ordering::Equal => ties += 1,
            std::cmp::Ordering::Less => {}
        }
    }
    (1.0 + higher as f64 + ties as f64 / 2.0, candidates)
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct QueryRank {
    pub triple: Triple,
    pub query: Query,
    pub rank: f64,
    pub candidates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkPredictionResult {
    pub mrr: f64,
    pub hits1: f64,
    pub hits10: f64,
    pub filter: &'static str,
    pub ranks: Vec<QueryRank>,
}

impl LinkPredictionResult {
    pub fn from_ranks(ranks: Vec<QueryRank>, filter: &'static str) -> Self {
        let n = ranks.len().max(1) as f64;
        let mean = |f: &dyn Fn(f64) -> f64| ranks.iter().map(|q| f(q.rank)).sum::<f64>() / n;
        Self {
            mrr: mean(&|r| 1.0 / r),
            hits1: mean(&|r| if r <= 1.0 { 1.0 } else { 0.0 }),
            hits10: mean(&|r| if r <= 10.0 { 1.0 } else { 0.0 }),
            filter,
            ranks,
        }
    }
}

impl fmt::Display for LinkPredictionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "queries={}", self.ranks.len())?;
        writeln!(f, "filter={}", self.filter)?;
        writeln!(f, "mrr={}", self.mrr)?;
        writeln!(f, "hits@1={}", self.hits1)?;
        writeln!(f, "hits@10={}", self.hits10)
    }
}

/// Filtered head and tail ranking of every test positive.
pub fn eval_link_prediction(
    scorer: &dyn QueryScorer,
    positives: &[Triple],
    filter: &Filter,
    vocab: &Vocabulary,
) -> Result<LinkPredictionResult, EvalError> {
    let entities = vocab.entities.len();
    if let Some(g) = positives.iter().find(|t| filter.train.contains(t)) {
        return Err(EvalError::GoldFiltered(vocab.labels(g).join(" ")));
    }
    let queries: Vec<(Triple, Query, EntityId)> = positives
        .iter()
        .flat_map(|&t| Query::both(t).map(|(q, gold)| (t, q, gold)))
        .collect();
    let ranks = queries
        .par_iter()
        .map(|&(triple, query, gold)| {
            let keys = scorer.score_query(query, entities)?;
            let (rank, candidates) =
                rank_of(&keys, gold.index(), |e| filter.is_filtered(&query.completed(EntityId(e as u32)), &triple));
            Ok(QueryRank { triple, query, rank, candidates })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(LinkPredictionResult::from_ranks(ranks, filter.name()))
}
