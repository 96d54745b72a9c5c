//! Backtracking join of premise atoms against the graph indexes.

use std::ops::ControlFlow;

use super::{Atom, Term};
use crate::kg::{EntityId, KnowledgeGraph, Triple};

/// Variable assignment indexed by variable number.
pub type Binding = Vec<Option<EntityId>>;

pub(crate) fn value(term: Term, binding: &Binding) -> Option<EntityId> {
    match term {
        Term::Const(e) => Some(e),
        Term::Var(v) => binding[v as usize],
    }
}

/// Binds `term` to `entity`. Returns `Some(true)` if a variable was newly
/// bound (and must be undone), `Some(false)` if already consistent, `None` on
/// conflict.
fn bind(term: Term, entity: EntityId, binding: &mut Binding) -> Option<bool> {
    match term {
        Term::Const(e) => (e == entity).then_some(false),
        Term::Var(v) => match binding[v as usize] {
            Some(e) => (e == entity).then_some(false),
            None => {
                binding[v as usize] = Some(entity);
                Some(true)
            }
        },
    }
}

fn unbind(term: Term, newly: bool, binding: &mut Binding) {
    if let (true, Term::Var(v)) = (newly, term) {
        binding[v as usize] = None;
    }
}

pub(crate) fn instantiate(atom: &Atom, binding: &Binding) -> Option<Triple> {
    Some(Triple::new(value(atom.subject, binding)?, atom.relation, value(atom.object, binding)?))
}

/// Calls `visit` for every extension of `binding` that satisfies all
/// `atoms`. Atoms are joined most-bound-first, falling back to list order.
/// The binding is restored before returning.
pub fn ground_premise(
    kg: &KnowledgeGraph,
    atoms: &[Atom],
    binding: &mut Binding,
    visit: &mut dyn FnMut(&Binding) -> ControlFlow<()>,
) -> ControlFlow<()> {
    assert!(atoms.len() < 32, "premise too long");
    let remaining = (1u32 << atoms.len()) - 1;
    join(kg, atoms, remaining, binding, visit)
}

fn join(
    kg: &KnowledgeGraph,
    atoms: &[Atom],
    remaining: u32,
    binding: &mut Binding,
    visit: &mut dyn FnMut(&Binding) -> ControlFlow<()>,
) -> ControlFlow<()> {
    if remaining == 0 {
        return visit(binding);
    }
    let mut best = None;
    let mut best_bound = 0;
    for (i, atom) in atoms.iter().enumerate() {
        if remaining & (1 << i) == 0 {
            continue;
        }
        let bound = atom.terms().iter().filter(|t| value(**t, binding).is_some()).count();
        if best.is_none() || bound > best_bound {
            best = Some(i);
            best_bound = bound;
        }
        if bound == 2 {
            break;
        }
    }
    let i = best.expect("remaining is non-empty");
    let atom = atoms[i];
    let rest = remaining & !(1 << i);
    let s = value(atom.subject, binding);
    let o = value(atom.object, binding);
    match (s, o) {
        (Some(s), Some(o)) => {
            if kg.contains(&Triple::new(s, atom.relation, o)) {
                join(kg, atoms, rest, binding, visit)?;
            }
        }
        (Some(s), None) => {
            for t in kg.tails(s, atom.relation) {
                if let Some(newly) = bind(atom.object, t, binding) {
                    let flow = join(kg, atoms, rest, binding, visit);
                    unbind(atom.object, newly, binding);
                    flow?;
                }
            }
        }
        (None, Some(o)) => {
            for h in kg.heads(o, atom.relation) {
                if let Some(newly) = bind(atom.subject, h, binding) {
                    let flow = join(kg, atoms, rest, binding, visit);
                    unbind(atom.subject, newly, binding);
                    flow?;
                }
            }
        }
        (None, None) => {
            for t in kg.relation_triples(atom.relation) {
                let Some(ns) = bind(atom.subject, t.head, binding) else {
                    continue;
                };
                if let Some(no) = bind(atom.object, t.tail, binding) {
                    let flow = join(kg, atoms, rest, binding, visit);
                    unbind(atom.object, no, binding);
                    if flow.is_break() {
                        unbind(atom.subject, ns, binding);
                        return flow;
                    }
                }
                unbind(atom.subject, ns, binding);
            }
        }
    }
    ControlFlow::Continue(())
}
