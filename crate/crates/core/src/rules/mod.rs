//! Horn rules over the graph: representation, canonical form, grounding
//! engine, anytime mining and the rule-file format.

mod io;
pub(crate) mod join;
mod miner;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, RelationId, Vocabulary};

pub use io::{export_rules, import_rules, RuleParseError};
pub use join::{ground_premise, Binding};
pub use miner::{
    generalize, mine, sample_ground_path, score_rule, MineBudget, MineConfig, MineError, MineReport,
    RuleScore, MAX_RULE_HOPS,
};

/// Variable names in canonical order of first appearance.
pub const VARIABLE_NAMES: [&str; 26] = [
    "X", "Y", "Z", "A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L", "M", "N", "O",
    "P", "Q", "R", "S", "T", "U", "V", "W",
];

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Var(u8),
    Const(EntityId),
}

impl Term {
    pub fn var(self) -> Option<u8> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    pub fn is_const(self) -> bool {
        matches!(self, Term::Const(_))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub relation: RelationId,
    pub subject: Term,
    pub object: Term,
}

impl Atom {
    pub fn new(relation: RelationId, subject: Term, object: Term) -> Self {
        Self { relation, subject, object }
    }

    pub fn terms(&self) -> [Term; 2] {
        [self.subject, self.object]
    }

    fn shares_var(&self, other: &Atom) -> bool {
        self.terms()
            .iter()
            .filter_map(|t| t.var())
            .any(|v| other.terms().iter().any(|o| o.var() == Some(v)))
    }
}

/// The logical part of a rule: a single conclusion atom implied by a chain
/// of premise atoms. Equality on canonical clauses is alpha-equivalence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clause {
    pub conclusion: Atom,
    pub premise: Vec<Atom>,
}

impl Clause {
    /// Renames variables in order of first appearance (conclusion subject,
    /// conclusion object, then premise atoms left to right).
    pub fn canonical(conclusion: Atom, premise: Vec<Atom>) -> Self {
        let mut map: HashMap<u8, u8> = HashMap::new();
        let mut rename = |t: Term| match t {
            Term::Var(v) => {
                let next = map.len() as u8;
                Term::Var(*map.entry(v).or_insert(next))
            }
            c => c,
        };
        let mut map_atom = |a: Atom| Atom::new(a.relation, rename(a.subject), rename(a.object));
        let conclusion = map_atom(conclusion);
        let premise = premise.into_iter().map(map_atom).collect();
        Self { conclusion, premise }
    }

    pub fn variable_count(&self) -> usize {
        self.all_atoms()
            .flat_map(|a| a.terms())
            .filter_map(Term::var)
            .map(|v| v as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn all_atoms(&self) -> impl Iterator<Item = &Atom> {
        std::iter::once(&self.conclusion).chain(self.premise.iter())
    }

    /// The literal identity rule `r(X,Y) <= r(X,Y)`.
    pub fn is_trivial(&self) -> bool {
        self.premise.len() == 1 && self.premise[0] == self.conclusion
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        if self.premise.is_empty() {
            return Err(RuleError::EmptyPremise);
        }
        if self.premise.windows(2).any(|w| !w[0].shares_var(&w[1])) {
            return Err(RuleError::Disconnected);
        }
        for v in self.conclusion.terms().iter().filter_map(|t| t.var()) {
            if !self.premise.iter().any(|a| a.terms().iter().any(|t| t.var() == Some(v))) {
                return Err(RuleError::UnboundConclusionVariable);
            }
        }
        if self.conclusion.subject.is_const() && self.conclusion.object.is_const() {
            return Err(RuleError::TooManyConstants);
        }
        let constants = self.all_atoms().flat_map(|a| a.terms()).filter(|t| t.is_const()).count();
        if constants > 1 {
            return Err(RuleError::TooManyConstants);
        }
        if self.variable_count() > VARIABLE_NAMES.len() {
            return Err(RuleError::TooManyVariables);
        }
        Ok(())
    }

    pub fn display<'a>(&'a self, vocab: &'a Vocabulary) -> DisplayClause<'a> {
        DisplayClause { clause: self, vocab }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("rule premise is empty")]
    EmptyPremise,
    #[error("consecutive premise atoms do not share a variable")]
    Disconnected,
    #[error("a conclusion variable does not occur in the premise")]
    UnboundConclusionVariable,
    #[error("rule has more than one constant")]
    TooManyConstants,
    #[error("rule uses more variables than the canonical alphabet holds")]
    TooManyVariables,
    #[error("path is not connected")]
    DisconnectedPath,
    #[error("support counts must satisfy body_support >= support >= 1")]
    BadSupport,
    #[error("confidence {0} outside (0, 1]")]
    ConfidenceRange(f64),
    #[error("confidence {confidence} differs from support / body_support = {expected}")]
    ConfidenceMismatch { confidence: f64, expected: f64 },
}

pub struct DisplayClause<'a> {
    clause: &'a Clause,
    vocab: &'a Vocabulary,
}

fn write_term(f: &mut fmt::Formatter<'_>, term: Term, vocab: &Vocabulary) -> fmt::Result {
    match term {
        Term::Var(v) => f.write_str(VARIABLE_NAMES[v as usize]),
        Term::Const(e) => write!(f, "`{}`", vocab.entity_label(e)),
    }
}

fn write_atom(f: &mut fmt::Formatter<'_>, atom: &Atom, vocab: &Vocabulary) -> fmt::Result {
    write!(f, "{}(", vocab.relation_label(atom.relation))?;
    write_term(f, atom.subject, vocab)?;
    f.write_str(",")?;
    write_term(f, atom.object, vocab)?;
    f.write_str(")")
}

impl fmt::Display for DisplayClause<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_atom(f, &self.clause.conclusion, self.vocab)?;
        f.write_str(" <= ")?;
        for (i, atom) in self.clause.premise.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write_atom(f, atom, self.vocab)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HornRule {
    pub clause: Clause,
    pub support: u64,
    pub body_support: u64,
    pub confidence: f64,
}

impl HornRule {
    pub fn new(clause: Clause, support: u64, body_support: u64) -> Result<Self, RuleError> {
        if support == 0 || body_support < support {
            return Err(RuleError::BadSupport);
        }
        let rule = Self {
            clause,
            support,
            body_support,
            confidence: support as f64 / body_support as f64,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn conclusion(&self) -> &Atom {
        &self.clause.conclusion
    }

    pub fn premise(&self) -> &[Atom] {
        &self.clause.premise
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        self.clause.validate()?;
        if self.support == 0 || self.body_support < self.support {
            return Err(RuleError::BadSupport);
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(RuleError::ConfidenceRange(self.confidence));
        }
        let expected = self.support as f64 / self.body_support as f64;
        if (expected - self.confidence).abs() > 1e-9 {
            return Err(RuleError::ConfidenceMismatch { confidence: self.confidence, expected });
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleId(pub u32);

/// Rules without alpha-equivalent duplicates, indexed by conclusion relation.
/// A rule's id is its position.
#[derive(Clone, Debug, Default)]
pub struct RuleSet {
    rules: Vec<HornRule>,
    by_clause: HashMap<Clause, RuleId>,
    by_conclusion: HashMap<RelationId, Vec<RuleId>>,
}

impl RuleSet {
    /// Keeps the first of any alpha-equivalent rules; order is preserved.
    pub fn new(rules: impl IntoIterator<Item = HornRule>) -> Self {
        let mut set = Self::default();
        for rule in rules {
            set.push(rule);
        }
        set
    }

    /// Returns `false` if an alpha-equivalent rule is already present.
    pub fn push(&mut self, mut rule: HornRule) -> bool {
        rule.clause = Clause::canonical(rule.clause.conclusion, rule.clause.premise);
        if self.by_clause.contains_key(&rule.clause) {
            return false;
        }
        let id = RuleId(self.rules.len() as u32);
        self.by_clause.insert(rule.clause.clone(), id);
        self.by_conclusion.entry(rule.clause.conclusion.relation).or_default().push(id);
        self.rules.push(rule);
        true
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: RuleId) -> Option<&HornRule> {
        self.rules.get(id.0 as usize)
    }

    pub fn rules(&self) -> &[HornRule] {
        &self.rules
    }

    pub fn iter(&self) -> impl Iterator<Item = (RuleId, &HornRule)> {
        self.rules.iter().enumerate().map(|(i, r)| (RuleId(i as u32), r))
    }

    pub fn concluding(&self, relation: RelationId) -> &[RuleId] {
        self.by_conclusion.get(&relation).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Looks up a rule alpha-equivalent to the given clause.
    pub fn find(&self, conclusion: Atom, premise: Vec<Atom>) -> Option<RuleId> {
        self.by_clause.get(&Clause::canonical(conclusion, premise)).copied()
    }
}

impl std::ops::Index<RuleId> for RuleSet {
    type Output = HornRule;

    fn index(&self, id: RuleId) -> &HornRule {
        &self.rules[id.0 as usize]
    }
}
