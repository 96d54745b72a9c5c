//! Rule file format, one rule per line:
//!
//! ```text
//! support<TAB>body_support<TAB>confidence<TAB>conclusion <= premise1, premise2, ...
//! ```
//!
//! Atoms are written `relation(term,term)`; variables use the canonical
//! alphabet `X, Y, Z, A, B, ...`, constants are back-quoted entity labels.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{Atom, Clause, HornRule, RuleError, RuleSet, Term, VARIABLE_NAMES};
use crate::kg::Vocabulary;

#[derive(Debug, Error)]
pub enum RuleParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: RuleError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn export_rules<W: Write>(rules: &RuleSet, vocab: &Vocabulary, mut writer: W) -> std::io::Result<()> {
    for rule in rules.rules() {
        writeln!(
            writer,
            "{}\t{}\t{}\t{}",
            rule.support,
            rule.body_support,
            rule.confidence,
            rule.clause.display(vocab)
        )?;
    }
    Ok(())
}

/// Parses a rule file, interning unseen labels into `vocab`. Blank lines are
/// ignored; alpha-equivalent repeats keep the first occurrence.
pub fn import_rules<R: BufRead>(reader: R, vocab: &mut Vocabulary) -> Result<RuleSet, RuleParseError> {
    let mut set = RuleSet::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let syntax = |message: &str| RuleParseError::Syntax { line: line_no, message: message.to_owned() };
        let mut fields = line.splitn(4, '\t');
        let (Some(support), Some(body), Some(confidence), Some(text)) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(syntax("expected 4 tab-separated fields"));
        };
        let support: u64 = support.trim().parse().map_err(|_| syntax("support is not an integer"))?;
        let body_support: u64 = body.trim().parse().map_err(|_| syntax("body_support is not an integer"))?;
        let confidence: f64 = confidence.trim().parse().map_err(|_| syntax("confidence is not a number"))?;
        let clause = parse_clause(text, vocab).map_err(|m| syntax(&m))?;
        let rule = HornRule { clause, support, body_support, confidence };
        rule.validate().map_err(|source| RuleParseError::Invalid { line: line_no, source })?;
        set.push(rule);
    }
    Ok(set)
}

/// Byte offsets of `pattern` occurring outside back-quoted constants.
fn split_outside_quotes<'a>(text: &'a str, pattern: &str) -> Vec<&'a str> {
    let mut parts = Vec::new();
    let mut quoted = false;
    let mut start = 0;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'`' {
            quoted = !quoted;
        } else if !quoted && text[i..].starts_with(pattern) {
            parts.push(&text[start..i]);
            i += pattern.len();
            start = i;
            continue;
        }
        i += 1;
    }
    parts.push(&text[start..]);
    parts
}

fn parse_clause(text: &str, vocab: &mut Vocabulary) -> Result<Clause, String> {
    let sides = split_outside_quotes(text.trim(), " <= ");
    let [conclusion, premise] = sides.as_slice() else {
        return Err("expected exactly one ` <= ` separator".into());
    };
    let conclusion = parse_atom(conclusion, vocab)?;
    let premise = split_outside_quotes(premise, ", ")
        .into_iter()
        .map(|a| parse_atom(a, vocab))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Clause::canonical(conclusion, premise))
}

/// Splits the trailing term off `text`, returning `(rest, term)`.
fn take_term<'a>(text: &'a str, vocab: &mut Vocabulary) -> Result<(&'a str, Term), String> {
    if let Some(inner) = text.strip_suffix('`') {
        let open = inner.rfind('`').ok_or("unterminated constant")?;
        let label = &inner[open + 1..];
        if label.is_empty() {
            return Err("empty constant".into());
        }
        return Ok((&inner[..open], Term::Const(vocab.intern_entity(label))));
    }
    let start = text
        .rfind(|c: char| !c.is_ascii_uppercase())
        .map(|i| i + 1)
        .unwrap_or(0);
    let name = &text[start..];
    let var = VARIABLE_NAMES
        .iter()
        .position(|v| *v == name)
        .ok_or_else(|| format!("unknown variable `{name}`"))?;
    Ok((&text[..start], Term::Var(var as u8)))
}

fn parse_atom(text: &str, vocab: &mut Vocabulary) -> Result<Atom, String> {
    let text = text.trim();
    let body = text.strip_suffix(')').ok_or_else(|| format!("atom `{text}` must end with `)`"))?;
    let (rest, object) = take_term(body, vocab)?;
    let rest = rest.strip_suffix(',').ok_or_else(|| format!("atom `{text}` needs two terms"))?;
    let (rest, subject) = take_term(rest, vocab)?;
    let relation = rest.strip_suffix('(').ok_or_else(|| format!("atom `{text}` is missing `(`"))?;
    if relation.is_empty() {
        return Err(format!("atom `{text}` has no relation"));
    }
    Ok(Atom::new(vocab.intern_relation(relation), subject, object))
}
