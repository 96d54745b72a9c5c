//! Triple storage: label interning, ingestion, frequency filtering and
//! adjacency indexes.
//!
//! Every stage downstream of ingestion works on interned ids. Several graphs
//! (mining corpus, dataset corpus, reference corpus, train split) usually
//! share one [`Vocabulary`] so their ids are directly comparable.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A `(head, relation, tail)` edge. Ordering is by the id tuple in that order.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self { head, relation, tail }
    }

    pub fn is_self_loop(&self) -> bool {
        self.head == self.tail
    }

    /// The entity at the other end of the edge, if `entity` is one of its ends.
    pub fn other_end(&self, entity: EntityId) -> Option<EntityId> {
        if self.head == entity {
            Some(self.tail)
        } else if self.tail == entity {
            Some(self.head)
        } else {
            None
        }
    }
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("line {line}: malformed triple record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unknown entity id {0}")]
    UnknownEntity(u32),
    #[error("unknown {kind} label `{label}`")]
    UnknownLabel { kind: &'static str, label: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense `label <-> id` mapping, ids assigned in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    labels: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.ids.insert(label.to_owned(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub entities: Interner,
    pub relations: Interner,
}

impl Vocabulary {
    pub fn intern_entity(&mut self, label: &str) -> EntityId {
        EntityId(self.entities.intern(label))
    }

    pub fn intern_relation(&mut self, label: &str) -> RelationId {
        RelationId(self.relations.intern(label))
    }

    pub fn entity(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn relation(&self, label: &str) -> Option<RelationId> {
        self.relations.get(label).map(RelationId)
    }

    /// Panics on an id that was not issued by this vocabulary.
    pub fn entity_label(&self, id: EntityId) -> &str {
        self.entities.label(id.0).expect("entity id issued by this vocabulary")
    }

    /// Panics on an id that was not issued by this vocabulary.
    pub fn relation_label(&self, id: RelationId) -> &str {
        self.relations.label(id.0).expect("relation id issued by this vocabulary")
    }

    pub fn intern_triple(&mut self, head: &str, relation: &str, tail: &str) -> Triple {
        Triple::new(
            self.intern_entity(head),
            self.intern_relation(relation),
            self.intern_entity(tail),
        )
    }

    /// Resolves a labelled triple without interning.
    pub fn resolve(&self, head: &str, relation: &str, tail: &str) -> Result<Triple, KgError> {
        let entity = |label: &str| {
            self.entity(label).ok_or_else(|| KgError::UnknownLabel {
                kind: "entity",
                label: label.to_owned(),
            })
        };
        let relation = self.relation(relation).ok_or_else(|| KgError::UnknownLabel {
            kind: "relation",
            label: relation.to_owned(),
        })?;
        Ok(Triple::new(entity(head)?, relation, entity(tail)?))
    }

    pub fn labels(&self, triple: &Triple) -> [&str; 3] {
        [
            self.entity_label(triple.head),
            self.relation_label(triple.relation),
            self.entity_label(triple.tail),
        ]
    }

    pub fn display<'a>(&'a self, triple: &'a Triple) -> DisplayTriple<'a> {
        DisplayTriple { vocab: self, triple }
    }
}

pub struct DisplayTriple<'a> {
    vocab: &'a Vocabulary,
    triple: &'a Triple,
}

impl fmt::Display for DisplayTriple<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [h, r, t] = self.vocab.labels(self.triple);
        write!(f, "{h}\t{r}\t{t}")
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum IngestMode {
    /// Abort on the first malformed line.
    Strict,
    /// Skip and count malformed lines.
    Lenient,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub lines_read: usize,
    pub kept: usize,
    pub duplicates: usize,
    pub skipped: usize,
}

/// Splits one `head<TAB>relation<TAB>tail` record.
pub fn parse_record(line: &str) -> Result<[&str; 3], String> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut fields = line.split('\t');
    let (Some(h), Some(r), Some(t)) = (fields.next(), fields.next(), fields.next()) else {
        return Err("expected 3 tab-separated fields".into());
    };
    if fields.next().is_some() {
        return Err("expected exactly 3 tab-separated fields".into());
    }
    if h.is_empty() || r.is_empty() || t.is_empty() {
        return Err("empty field".into());
    }
    Ok([h, r, t])
}

/// Reads triple records into `vocab`, returning the distinct triples in
/// first-seen order.
pub fn ingest_into<R: BufRead>(
    reader: R,
    mode: IngestMode,
    vocab: &mut Vocabulary,
) -> Result<(Vec<Triple>, IngestReport), KgError> {
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    let mut triples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        report.lines_read += 1;
        let [h, r, t] = match parse_record(&line) {
            Ok(fields) => fields,
            Err(reason) => match mode {
                IngestMode::Strict => return Err(KgError::Malformed { line: idx + 1, reason }),
                IngestMode::Lenient => {
                    report.skipped += 1;
                    continue;
                }
            },
        };
        let triple = vocab.intern_triple(h, r, t);
        if seen.insert(triple) {
            triples.push(triple);
        } else {
            report.duplicates += 1;
        }
    }
    report.kept = triples.len();
    Ok((triples, report))
}

/// Reads a triple stream into a fresh graph with its own vocabulary.
pub fn ingest<R: BufRead>(
    reader: R,
    mode: IngestMode,
) -> Result<(KnowledgeGraph, IngestReport), KgError> {
    let mut vocab = Vocabulary::default();
    let (triples, report) = ingest_into(reader, mode, &mut vocab)?;
    Ok((KnowledgeGraph::new(Arc::new(vocab), triples), report))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
}

/// Immutable, indexed triple set.
///
/// Per-entity adjacency lists are sorted by `(relation, neighbor)`, so the
/// by-head-relation and by-tail-relation lookups are binary-searched slices.
#[derive(Clone)]
pub struct KnowledgeGraph {
    vocab: Arc<Vocabulary>,
    triples: Vec<Triple>,
    set: HashSet<Triple>,
    out: Vec<Vec<(RelationId, EntityId)>>,
    inc: Vec<Vec<(RelationId, EntityId)>>,
    by_relation: Vec<Vec<Triple>>,
}

impl fmt::Debug for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeGraph")
            .field("triples", &self.triples.len())
            .field("entities", &self.entity_count())
            .field("relations", &self.relation_count())
            .finish()
    }
}

impl KnowledgeGraph {
    /// Builds the graph and its indexes. Duplicates are collapsed; every id
    /// must have been issued by `vocab`.
    pub fn new(vocab: Arc<Vocabulary>, triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut triples: Vec<Triple> = triples.into_iter().collect();
        triples.sort_unstable();
        triples.dedup();
        let n_ent = vocab.entities.len();
        let n_rel = vocab.relations.len();
        let mut out = vec![Vec::new(); n_ent];
        let mut inc = vec![Vec::new(); n_ent];
        let mut by_relation = vec![Vec::new(); n_rel];
        for t in &triples {
            assert!(
                t.head.index() < n_ent && t.tail.index() < n_ent && t.relation.index() < n_rel,
                "triple ids outside the vocabulary"
            );
            out[t.head.index()].push((t.relation, t.tail));
            inc[t.tail.index()].push((t.relation, t.head));
            by_relation[t.relation.index()].push(*t);
        }
        // `triples` is sorted by (head, relation, tail) so `out` lists already are.
        for list in &mut inc {
            list.sort_unstable();
        }
        let set = triples.iter().copied().collect();
        Self { vocab, triples, set, out, inc, by_relation }
    }

    pub fn empty(vocab: Arc<Vocabulary>) -> Self {
        Self::new(vocab, std::iter::empty())
    }

    /// Same vocabulary, different triples.
    pub fn with_triples(&self, triples: impl IntoIterator<Item = Triple>) -> Self {
        Self::new(Arc::clone(&self.vocab), triples)
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// All triples in ascending id order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.set.contains(triple)
    }

    pub fn triple_set(&self) -> &HashSet<Triple> {
        &self.set
    }

    fn slice(list: &[(RelationId, EntityId)], relation: RelationId) -> &[(RelationId, EntityId)] {
        let start = list.partition_point(|(r, _)| *r < relation);
        let end = list.partition_point(|(r, _)| *r <= relation);
        &list[start..end]
    }

    /// Tails `t` with `(head, relation, t)` in the graph, ascending.
    pub fn tails(&self, head: EntityId, relation: RelationId) -> impl Iterator<Item = EntityId> + '_ {
        let list = self.out.get(head.index()).map(Vec::as_slice).unwrap_or(&[]);
        Self::slice(list, relation).iter().map(|(_, e)| *e)
    }

    /// Heads `h` with `(h, relation, tail)` in the graph, ascending.
    pub fn heads(&self, tail: EntityId, relation: RelationId) -> impl Iterator<Item = EntityId> + '_ {
        let list = self.inc.get(tail.index()).map(Vec::as_slice).unwrap_or(&[]);
        Self::slice(list, relation).iter().map(|(_, e)| *e)
    }

    pub fn out_edges(&self, entity: EntityId) -> &[(RelationId, EntityId)] {
        self.out.get(entity.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn in_edges(&self, entity: EntityId) -> &[(RelationId, EntityId)] {
        self.inc.get(entity.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn relation_triples(&self, relation: RelationId) -> &[Triple] {
        self.by_relation.get(relation.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Triples with `entity` in the requested slot, optionally restricted to
    /// one relation, in ascending id order.
    pub fn neighbors(
        &self,
        entity: EntityId,
        direction: Direction,
        relation: Option<RelationId>,
    ) -> Result<Vec<Triple>, KgError> {
        if entity.index() >= self.vocab.entities.len() {
            return Err(KgError::UnknownEntity(entity.0));
        }
        let list = match direction {
            Direction::Out => self.out_edges(entity),
            Direction::In => self.in_edges(entity),
        };
        let list = match relation {
            Some(r) => Self::slice(list, r),
            None => list,
        };
        let mut triples: Vec<Triple> = list
            .iter()
            .map(|&(r, other)| match direction {
                Direction::Out => Triple::new(entity, r, other),
                Direction::In => Triple::new(other, r, entity),
            })
            .collect();
        if direction == Direction::In {
            triples.sort_unstable();
        }
        Ok(triples)
    }

    /// Number of triple slots the entity occupies (a self-loop counts twice).
    pub fn entity_frequency(&self, entity: EntityId) -> usize {
        self.out_edges(entity).len() + self.in_edges(entity).len()
    }

    pub fn relation_frequency(&self, relation: RelationId) -> usize {
        self.relation_triples(relation).len()
    }

    /// Entities occurring in at least one triple, ascending.
    pub fn active_entities(&self) -> Vec<EntityId> {
        (0..self.vocab.entities.len() as u32)
            .map(EntityId)
            .filter(|&e| self.entity_frequency(e) > 0)
            .collect()
    }

    /// Relations occurring in at least one triple, ascending.
    pub fn active_relations(&self) -> Vec<RelationId> {
        (0..self.vocab.relations.len() as u32)
            .map(RelationId)
            .filter(|&r| self.relation_frequency(r) > 0)
            .collect()
    }

    pub fn entity_count(&self) -> usize {
        self.active_entities().len()
    }

    pub fn relation_count(&self) -> usize {
        self.active_relations().len()
    }

    pub fn stats(&self) -> GraphStats {
        let entities = self.active_entities();
        let max_degree = entities.iter().map(|&e| self.entity_frequency(e)).max().unwrap_or(0);
        let mean_degree = if entities.is_empty() {
            0.0
        } else {
            2.0 * self.len() as f64 / entities.len() as f64
        };
        GraphStats {
            triples: self.len(),
            entities: entities.len(),
            relations: self.relation_count(),
            self_loops: self.triples.iter().filter(|t| t.is_self_loop()).count(),
            max_entity_degree: max_degree,
            mean_entity_degree: mean_degree,
        }
    }

    /// Writes `head<TAB>relation<TAB>tail` lines in ascending id order.
    pub fn write_tsv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        write_triples(&mut writer, &self.vocab, self.triples.iter())
    }
}

pub fn write_triples<'a, W: Write>(
    writer: &mut W,
    vocab: &Vocabulary,
    triples: impl IntoIterator<Item = &'a Triple>,
) -> std::io::Result<()> {
    for t in triples {
        writeln!(writer, "{}", vocab.display(t))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphStats {
    pub triples: usize,
    pub entities: usize,
    pub relations: usize,
    pub self_loops: usize,
    pub max_entity_degree: usize,
    pub mean_entity_degree: f64,
}

impl fmt::Display for GraphStats {
    /// Flat `key=value` report.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "triples={}", self.triples)?;
        writeln!(f, "entities={}", self.entities)?;
        writeln!(f, "relations={}", self.relations)?;
        writeln!(f, "self_loops={}", self.self_loops)?;
        writeln!(f, "max_entity_degree={}", self.max_entity_degree)?;
        writeln!(f, "mean_entity_degree={:.4}", self.mean_entity_degree)
    }
}

/// Top-k ids by descending frequency; ties go to the lower id.
fn top_k<I: Copy + Ord + std::hash::Hash>(mut ranked: Vec<(usize, I)>, k: usize) -> HashSet<I> {
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(k).map(|(_, id)| id).collect()
}

/// Keeps the triples whose relation is not blacklisted and whose relation and
/// both entities rank within the top-k by frequency. Frequencies are taken on
/// the input graph; relations are ranked after the blacklist is applied.
pub fn frequency_filter(
    kg: &KnowledgeGraph,
    top_entities: usize,
    top_relations: usize,
    relation_blacklist: &HashSet<String>,
) -> KnowledgeGraph {
    let relations = kg
        .active_relations()
        .into_iter()
        .filter(|&r| !relation_blacklist.contains(kg.vocab.relation_label(r)))
        .map(|r| (kg.relation_frequency(r), r))
        .collect();
    let keep_relations = top_k(relations, top_relations);
    let entities = kg
        .active_entities()
        .into_iter()
        .map(|e| (kg.entity_frequency(e), e))
        .collect();
    let keep_entities = top_k(entities, top_entities);
    kg.with_triples(kg.triples.iter().copied().filter(|t| {
        keep_relations.contains(&t.relation)
            && keep_entities.contains(&t.head)
            && keep_entities.contains(&t.tail)
    }))
}
