//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use inferkg_cli::commands::{synth, SynthOptions};
use inferkg_cli::pipeline::{extend_config, mine_config, split_config};
use inferkg_cli::{run_pipeline, PipelineConfig};
use inferkg_core::bundle::read_bundle;
use inferkg_core::curate::{DatasetBundle, Label};
use inferkg_core::eval::{
    eval_closed, eval_link_prediction, eval_open, fit_closed, fit_pair, fit_single, Confusion, Filter, OpenConfusion,
    OpenPolicy, Query, QueryScorer, ScoreTable, Scored, TableScorer,
};
use inferkg_core::kg::{ingest_into, EntityId, IngestMode, KnowledgeGraph, RelationId, Triple, Vocabulary};
use inferkg_core::rules::{mine, Atom, Clause, HornRule, MineBudget, MineConfig, RuleId, RuleSet, Term};
use inferkg_core::split::{
    build_split, classify_pattern, extend_paths, ground_rule, retain_inferential, GroundedPath, Grounding, Pattern,
};
use inferkg_core::synth::{kinship_world, KinshipConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Outcome = Result<String, String>;

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed < limit, || format!("{what} took {elapsed:.2?}, limit {limit:?}"))
}

fn judge(name: &str, run: impl FnOnce() -> Verdict) -> bool {
    let verdict = panic::catch_unwind(AssertUnwindSafe(run))
        .unwrap_or_else(|e| Verdict::Fail(format!("panicked: {:?}", e.downcast_ref::<String>().map(String::as_str).or(e.downcast_ref::<&str>().copied()))));
    let (tag, detail, ok) = match verdict {
        Verdict::Pass(d) => ("PASS", d, true),
        Verdict::Fail(d) => ("FAIL", d, false),
        Verdict::Skip(d) => ("SKIP", d, true),
    };
    println!("{tag} {name}: {detail}");
    ok
}

fn verdict(outcome: Outcome) -> Verdict {
    match outcome {
        Ok(d) => Verdict::Pass(d),
        Err(d) => Verdict::Fail(d),
    }
}

// ---------------------------------------------------------------- fixtures

struct SynthRun {
    config: PipelineConfig,
    bundle_dir: PathBuf,
    pipeline_time: Duration,
}

fn synth_run(root: &Path) -> Result<SynthRun, String> {
    let world = root.join("kinship");
    let opts = SynthOptions { families: 300, mother_rate: 0.95, hidden_fraction: 0.1 };
    synth(&PipelineConfig::default(), &opts, &world).map_err(|e| e.to_string())?;
    let mut config = PipelineConfig::default();
    config.apply_text(&fs::read_to_string(world.join("pipeline.conf")).unwrap()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let summary = run_pipeline(&config).map_err(|e| e.to_string())?;
    Ok(SynthRun { bundle_dir: summary.output_dir, config, pipeline_time: start.elapsed() })
}

/// A corpus unrelated to kinship: a containment tree whose nodes inherit
/// their region from the parent, mostly listed inverses, and symmetric
/// adjacency noise.
fn random_corpus(path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut lines = Vec::new();
    let mut region = Vec::new();
    for i in 0..400usize {
        if i < 10 {
            region.push(i % 4);
            lines.push(format!("n{i}\tinRegion\tr{}", i % 4));
            continue;
        }
        let parent = rng.random_range(0..i);
        region.push(region[parent]);
        lines.push(format!("n{i}\tpartOf\tn{parent}"));
        if rng.random_bool(0.9) {
            lines.push(format!("n{parent}\thasPart\tn{i}"));
        }
        if rng.random_bool(0.85) {
            lines.push(format!("n{i}\tinRegion\tr{}", region[i]));
        }
    }
    for _ in 0..500 {
        let (a, b) = (rng.random_range(0..400), rng.random_range(0..400));
        if a == b {
            continue;
        }
        lines.push(format!("n{a}\tadjacentTo\tn{b}"));
        if rng.random_bool(0.9) {
            lines.push(format!("n{b}\tadjacentTo\tn{a}"));
        }
    }
    let text: String = lines.into_iter().map(|l| l + "\n").collect();
    fs::write(path, text).unwrap();
}

/// Exact, zero-tolerance recheck of a bundle written to disk.
fn guarantee_holds(dir: &Path) -> Result<(usize, usize), String> {
    let bundle: DatasetBundle = read_bundle(dir, Vocabulary::default()).map_err(|e| e.to_string())?;
    let train: HashSet<Triple> = bundle.train.iter().copied().collect();
    let mut positives = 0;
    for l in bundle.valid.iter().chain(&bundle.test) {
        ensure(!train.contains(&l.triple), || format!("{}: labeled triple {} is in train", dir.display(), bundle.vocab.display(&l.triple)))?;
        if l.label != Label::Positive {
            continue;
        }
        positives += 1;
        let supported = bundle.paths.get(&l.triple).is_some_and(|paths| {
            paths
                .iter()
                .any(|p| p.conclusion == l.triple && !p.premises.is_empty() && p.premises.iter().all(|t| train.contains(t)))
        });
        ensure(supported, || format!("{}: positive {} has no path inside train", dir.display(), bundle.vocab.display(&l.triple)))?;
    }
    ensure(positives > 0, || format!("{}: no positives", dir.display()))?;
    Ok((positives, bundle.valid.len() + bundle.test.len()))
}

// ---------------------------------------------------------------- criteria

fn inferential_guarantee(run: &Result<SynthRun, String>, root: &Path) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let world = fs::read_to_string(run.config.reference_corpus.as_ref().unwrap()).unwrap().lines().count();
    ensure(world >= 5000, || format!("synthetic world has only {world} triples"))?;
    let corpus = root.join("random.tsv");
    random_corpus(&corpus);
    let config = PipelineConfig {
        dataset_corpus: Some(corpus),
        output_dir: root.join("random-bundle"),
        mining_budget: MineBudget::Iterations(20_000),
        ..PipelineConfig::default()
    };
    let random_dir = run_pipeline(&config).map_err(|e| format!("random corpus: {e}"))?.output_dir;

    let start = Instant::now();
    let mut checked = Vec::new();
    for dir in [run.bundle_dir.clone(), run.bundle_dir.join("dense"), random_dir.clone(), random_dir.join("dense")] {
        if dir.ends_with("dense") && !dir.exists() {
            continue;
        }
        checked.push(guarantee_holds(&dir)?);
    }
    within(start.elapsed(), Duration::from_secs(10), "check")?;
    Ok(format!(
        "world {world} triples; positives/labeled per bundle {:?}; check {:.2?}, pipeline {:.2?}",
        checked,
        start.elapsed(),
        run.pipeline_time
    ))
}

fn planted_rule_recovery() -> Outcome {
    let world = kinship_world(&KinshipConfig { mother_rate: 0.95, ..KinshipConfig::default() });
    let kg = KnowledgeGraph::new(Arc::new(world.vocab), world.world);
    let config = MineConfig { budget: MineBudget::Iterations(100_000), ..MineConfig::default() };
    let start = Instant::now();
    let (rules, _) = mine(&kg, &config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(10), "mining")?;
    let v = kg.vocab();
    let (x, y, z) = (Term::Var(0), Term::Var(1), Term::Var(2));
    let rel = |name: &str| v.relation(name).ok_or_else(|| format!("no relation {name}"));
    let id = rules
        .find(Atom::new(rel("mother")?, x, y), vec![Atom::new(rel("spouse")?, z, x), Atom::new(rel("father")?, z, y)])
        .ok_or("planted rule not mined")?;
    let lambda = rules[id].confidence;
    ensure((lambda - 0.95).abs() <= 0.05, || format!("confidence {lambda}"))?;
    let low = rules.iter().filter(|(_, r)| r.confidence < 0.1).count();
    ensure(low == 0, || format!("{low} rules under lambda_min"))?;
    Ok(format!("confidence {lambda:.4} in {elapsed:.2?}, {} rules", rules.len()))
}

fn brute_groundings(rule: &HornRule, kg: &KnowledgeGraph, n: u32) -> BTreeSet<Grounding> {
    let vars = rule.clause.variable_count();
    let mut out = BTreeSet::new();
    let mut assign = vec![0u32; vars];
    loop {
        let val = |t: Term| match t {
            Term::Var(v) => EntityId(assign[v as usize]),
            Term::Const(c) => c,
        };
        let inst = |a: &Atom| Triple::new(val(a.subject), a.relation, val(a.object));
        let premises: Vec<Triple> = rule.premise().iter().map(inst).collect();
        let conclusion = inst(rule.conclusion());
        if premises.iter().all(|t| kg.contains(t)) && !conclusion.is_self_loop() && !premises.contains(&conclusion) {
            out.insert(Grounding { premises, conclusion });
        }
        let mut i = 0;
        loop {
            if i == vars {
                return out;
            }
            assign[i] += 1;
            if assign[i] < n {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}

fn grounding_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    let (mut rules_checked, mut nonempty, mut groundings) = (0, 0, 0);
    while rules_checked < 100 {
        let n = rng.random_range(4..=9u32);
        let relations = rng.random_range(1..=3u32);
        let mut vocab = Vocabulary::default();
        for e in 0..n {
            vocab.intern_entity(&format!("e{e}"));
        }
        for r in 0..relations {
            vocab.intern_relation(&format!("r{r}"));
        }
        let size = rng.random_range(1..=200);
        let triples: Vec<Triple> = (0..size)
            .map(|_| {
                Triple::new(EntityId(rng.random_range(0..n)), RelationId(rng.random_range(0..relations)), EntityId(rng.random_range(0..n)))
            })
            .collect();
        let kg = KnowledgeGraph::new(Arc::new(vocab), triples);
        let vars = rng.random_range(2..=4u8);
        let atom = |rng: &mut ChaCha8Rng| {
            Atom::new(RelationId(rng.random_range(0..relations)), Term::Var(rng.random_range(0..vars)), Term::Var(rng.random_range(0..vars)))
        };
        let mut conclusion = atom(&mut rng);
        if rng.random_bool(0.2) {
            conclusion.object = Term::Const(EntityId(rng.random_range(0..n)));
        }
        let premise: Vec<Atom> = (0..rng.random_range(1..=3)).map(|_| atom(&mut rng)).collect();
        let clause = Clause::canonical(conclusion, premise);
        if clause.validate().is_err() {
            continue;
        }
        let rule = HornRule::new(clause, 1, 1).map_err(|e| e.to_string())?;
        let fast = ground_rule(&rule, &kg);
        let unique: BTreeSet<Grounding> = fast.iter().cloned().collect();
        ensure(unique.len() == fast.len(), || format!("rule {rules_checked}: duplicate groundings"))?;
        let oracle = brute_groundings(&rule, &kg, n);
        ensure(unique == oracle, || {
            format!("rule {rules_checked}: {} groundings, oracle {}", unique.len(), oracle.len())
        })?;
        rules_checked += 1;
        nonempty += usize::from(!oracle.is_empty());
        groundings += oracle.len();
    }
    within(start.elapsed(), Duration::from_secs(60), "oracle comparison")?;
    Ok(format!("100 rules, {nonempty} with groundings, {groundings} groundings total, {:.2?}", start.elapsed()))
}

fn confidence_and_hops(run: &Result<SynthRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let config = &run.config;
    let mut vocab = Vocabulary::default();
    let read = |path: &Path, vocab: &mut Vocabulary| {
        ingest_into(BufReader::new(File::open(path).unwrap()), IngestMode::Strict, vocab).map(|r| r.0).map_err(|e| e.to_string())
    };
    let observed = read(config.dataset_corpus.as_ref().unwrap(), &mut vocab)?;
    let vocab = Arc::new(vocab);
    let kg = KnowledgeGraph::new(vocab, observed);
    let (rules, _) = mine(&kg, &mine_config(config)).map_err(|e| e.to_string())?;
    let split = build_split(&kg, &rules, &split_config(config)).map_err(|e| e.to_string())?;
    let extended = extend_paths(&split, &rules, &kg, &extend_config(config));
    let (mut paths, mut max_hops, mut lengthened) = (0, 0, 0);
    for p in extended.paths() {
        let product: f64 = p.rules_used.iter().map(|&id| rules[id].confidence).product();
        ensure((p.confidence - product).abs() <= 1e-9, || format!("path confidence {} vs product {product}", p.confidence))?;
        ensure(p.hops == p.premises.len(), || format!("hops {} with {} premises", p.hops, p.premises.len()))?;
        paths += 1;
        max_hops = max_hops.max(p.hops);
        lengthened += usize::from(p.rules_used.len() > 1);
    }
    ensure(lengthened > 0, || "no path was extended".into())?;
    let bundle = read_bundle(&run.bundle_dir, Vocabulary::default()).map_err(|e| e.to_string())?;
    let bundle_max = bundle.paths.values().flatten().map(|p| p.hops).max().unwrap_or(0);
    ensure(max_hops <= 9 && bundle_max <= 9, || format!("max hops {max_hops}, bundle {bundle_max}"))?;
    Ok(format!("{paths} paths ({lengthened} extended), max hops {max_hops}, bundle max hops {bundle_max}"))
}

/// Builds the path that grounds `clause` with a distinct entity per term and
/// classifies it.
fn classify_shape(vocab: &mut Vocabulary, clause: &Clause, extra: Option<Clause>) -> Pattern {
    let mut ground = |t: Term| match t {
        Term::Var(v) => vocab.intern_entity(&format!("v{v}")),
        Term::Const(c) => c,
    };
    let mut inst = |a: &Atom| Triple::new(ground(a.subject), a.relation, ground(a.object));
    let conclusion = inst(&clause.conclusion);
    let premises: Vec<Triple> = clause.premise.iter().map(&mut inst).collect();
    let mut rules = vec![HornRule::new(clause.clone(), 1, 1).unwrap()];
    rules.extend(extra.map(|c| HornRule::new(c, 1, 1).unwrap()));
    let rules = RuleSet::new(rules);
    let path = GroundedPath {
        conclusion,
        hops: premises.len(),
        premises,
        rules_used: vec![RuleId(0)],
        confidence: 1.0,
        pattern: Pattern::Others,
    };
    classify_pattern(&path, &rules)
}

fn unordered(a: &Atom) -> [Term; 2] {
    let mut t = [a.subject, a.object];
    t.sort();
    t
}

/// Hand-written classification of a rule shape.
fn expected_pattern(clause: &Clause, reverse_rule: bool) -> Pattern {
    let c = &clause.conclusion;
    match clause.premise.as_slice() {
        [p] => {
            let same = p.relation == c.relation;
            let swapped = p.subject == c.object && p.object == c.subject;
            match (same, swapped, reverse_rule) {
                (true, true, _) => Pattern::Symmetry,
                (false, true, true) => Pattern::Inversion,
                (false, true, false) => Pattern::Hierarchy,
                (_, false, _) => Pattern::Hierarchy,
            }
        }
        [a, b] => {
            let closed = c.subject.var().is_some() && c.object.var().is_some();
            let links = |atom: &Atom, from: Term, to: Term| unordered(atom) == unordered(&Atom::new(atom.relation, from, to));
            let middle = |atom: &Atom| if atom.subject == c.subject { atom.object } else { atom.subject };
            let chain = |first: &Atom, second: &Atom| {
                (first.subject == c.subject || first.object == c.subject) && links(second, middle(first), c.object)
            };
            if closed && (chain(a, b) || chain(b, a)) {
                Pattern::Composition
            } else {
                Pattern::Others
            }
        }
        _ => unreachable!("shapes have at most three atoms"),
    }
}

fn pattern_taxonomy() -> Outcome {
    let mut vocab = Vocabulary::default();
    let c = vocab.intern_entity("c");
    let rel: Vec<RelationId> = ["r0", "r1", "r2"].iter().map(|r| vocab.intern_relation(r)).collect();
    let (x, y, z) = (Term::Var(0), Term::Var(1), Term::Var(2));
    let terms = [x, y, z, Term::Const(c)];
    let heads = [Atom::new(rel[0], x, y), Atom::new(rel[0], x, Term::Const(c))];
    let mut shapes: Vec<Clause> = Vec::new();
    for head in heads {
        for r in &rel[..2] {
            for s in terms {
                for o in terms {
                    shapes.push(Clause::canonical(head, vec![Atom::new(*r, s, o)]));
                }
            }
        }
        for r1 in &rel {
            for r2 in &rel {
                for s1 in terms {
                    for o1 in terms {
                        for s2 in terms {
                            for o2 in terms {
                                shapes.push(Clause::canonical(head, vec![Atom::new(*r1, s1, o1), Atom::new(*r2, s2, o2)]));
                            }
                        }
                    }
                }
            }
        }
    }
    let shapes: BTreeSet<Clause> = shapes
        .into_iter()
        .filter(|cl| {
            let distinct: HashSet<&Atom> = cl.premise.iter().collect();
            cl.validate().is_ok() && !cl.is_trivial() && distinct.len() == cl.premise.len() && !cl.premise.contains(&cl.conclusion)
        })
        .collect();
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    let mut checked = 0;
    for clause in &shapes {
        let variants: Vec<Option<Clause>> = match clause.premise.as_slice() {
            [p] if p.relation != clause.conclusion.relation => {
                // the reverse implication, in variables
                vec![None, Some(Clause::canonical(Atom::new(p.relation, x, y), vec![Atom::new(clause.conclusion.relation, y, x)]))]
            }
            _ => vec![None],
        };
        for extra in variants {
            let with_reverse = extra.is_some();
            let got = classify_shape(&mut vocab, clause, extra);
            let want = expected_pattern(clause, with_reverse);
            ensure(got == want, || format!("{} (reverse rule {with_reverse}): got {got}, want {want}", clause.display(&vocab)))?;
            *tally.entry(want.to_string()).or_default() += 1;
            checked += 1;
        }
    }

    // the four exemplar rules, grounded with their published entities
    let mut v = Vocabulary::default();
    let exemplar = |v: &mut Vocabulary, lines: &[&str], rule: &str, reverse: Option<&str>| -> Pattern {
        let mut text = format!("1\t1\t1\t{rule}\n");
        if let Some(r) = reverse {
            text.push_str(&format!("1\t1\t1\t{r}\n"));
        }
        let rules = inferkg_core::rules::import_rules(text.as_bytes(), v).unwrap();
        let triples: Vec<Triple> = lines
            .iter()
            .map(|l| {
                let f: Vec<&str> = l.split('|').collect();
                v.intern_triple(f[0], f[1], f[2])
            })
            .collect();
        let (conclusion, premises) = triples.split_last().unwrap();
        let path = GroundedPath {
            conclusion: *conclusion,
            hops: premises.len(),
            premises: premises.to_vec(),
            rules_used: vec![RuleId(0)],
            confidence: 1.0,
            pattern: Pattern::Others,
        };
        classify_pattern(&path, &rules)
    };
    let exemplars = [
        (
            exemplar(&mut v, &["Prince Christopher|partner|Friederike", "Friederike|partner|Prince Christopher"], "partner(X,Y) <= partner(Y,X)", None),
            Pattern::Symmetry,
        ),
        (
            exemplar(
                &mut v,
                &["Amravati district|capital|Amravati", "Amravati|capitalOf|Amravati district"],
                "capitalOf(X,Y) <= capital(Y,X)",
                Some("capital(X,Y) <= capitalOf(Y,X)"),
            ),
            Pattern::Inversion,
        ),
        (
            exemplar(
                &mut v,
                &["Superman|derivativeWork|Superman Returns", "Superman|presentInWork|Superman Returns"],
                "presentInWork(X,Y) <= derivativeWork(X,Y)",
                None,
            ),
            Pattern::Hierarchy,
        ),
        (
            exemplar(
                &mut v,
                &[
                    "Eleanor|mother|Joanna",
                    "Ferdinand I|mother|Joanna",
                    "Isabella|sibling|Ferdinand I",
                    "Eleanor|sibling|Isabella",
                ],
                "sibling(X,Y) <= mother(X,Z), mother(A,Z), sibling(Y,A)",
                None,
            ),
            Pattern::Composition,
        ),
    ];
    for (i, (got, want)) in exemplars.iter().enumerate() {
        ensure(got == want, || format!("exemplar {i}: got {got}, want {want}"))?;
    }
    Ok(format!("{checked} shape cases {tally:?} and 4 exemplars"))
}

fn label_of(k: u32) -> Label {
    [Label::Negative, Label::Unknown, Label::Positive][k as usize % 3]
}

/// Distinct scores ascending with per-class counts (neg, unk, pos).
fn groups(points: &[(f64, Label)]) -> Vec<[usize; 3]> {
    let mut by: BTreeMap<i64, [usize; 3]> = BTreeMap::new();
    for &(s, l) in points {
        let slot = match l {
            Label::Negative => 0,
            Label::Unknown => 1,
            Label::Positive => 2,
        };
        by.entry((s * 1000.0) as i64).or_default()[slot] += 1;
    }
    by.into_values().collect()
}

/// Best number of correct closed predictions over every way of cutting the
/// sorted scores.
fn closed_best(points: &[(f64, Label)]) -> usize {
    let g = groups(points);
    (0..=g.len())
        .map(|cut| g[..cut].iter().map(|c| c[0] + c[1]).sum::<usize>() + g[cut..].iter().map(|c| c[2]).sum::<usize>())
        .max()
        .unwrap()
}

fn macro_f1(counts: &[[usize; 3]; 3]) -> f64 {
    let mut f = Vec::new();
    for k in 0..3 {
        let gold: usize = counts[k].iter().sum();
        let predicted: usize = counts.iter().map(|row| row[k]).sum();
        if gold + predicted == 0 {
            continue;
        }
        let tp = counts[k][k] as f64;
        let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let r = if gold == 0 { 0.0 } else { tp / gold as f64 };
        f.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
    }
    f.iter().sum::<f64>() / f.len().max(1) as f64
}

/// Best macro-F1 over every (negative prefix, unknown middle, positive
/// suffix) division of the sorted scores.
fn open_best(points: &[(f64, Label)]) -> f64 {
    let g = groups(points);
    let mut best = f64::NEG_INFINITY;
    for i in 0..=g.len() {
        for j in i..=g.len() {
            let mut counts = [[0usize; 3]; 3];
            for (k, c) in g.iter().enumerate() {
                let pred = if k < i { 0 } else if k < j { 1 } else { 2 };
                for gold in 0..3 {
                    counts[gold][pred] += c[gold];
                }
            }
            best = best.max(macro_f1(&counts));
        }
    }
    best
}

fn open_counts(points: &[(f64, Label)], (low, high): (f64, f64)) -> [[usize; 3]; 3] {
    let mut counts = [[0usize; 3]; 3];
    for &(s, l) in points {
        let pred = if s > high { 2 } else if s < low { 0 } else { 1 };
        let gold = match l {
            Label::Negative => 0,
            Label::Unknown => 1,
            Label::Positive => 2,
        };
        counts[gold][pred] += 1;
    }
    counts
}

fn threshold_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let start = Instant::now();
    for fixture in 0..200 {
        let closed = fixture < 100;
        let n = rng.random_range(1..=if closed { 50 } else { 40 });
        let points: Vec<(f64, Label)> =
            (0..n).map(|_| (rng.random_range(-12..12) as f64 / 4.0, label_of(rng.random_range(0..3)))).collect();
        if closed {
            let (t, correct) = fit_single(&points);
            let applied = points.iter().filter(|(s, l)| (*s > t) == (*l == Label::Positive)).count();
            let best = closed_best(&points);
            ensure(correct == best && applied == best, || format!("closed fixture {fixture}: fitted {correct}, applied {applied}, oracle {best}"))?;
        } else {
            let (pair, m) = fit_pair(&points);
            let applied = macro_f1(&open_counts(&points, pair));
            let best = open_best(&points);
            ensure(pair.0 <= pair.1, || format!("open fixture {fixture}: inverted pair {pair:?}"))?;
            ensure(m.f1 == best && applied == best, || format!("open fixture {fixture}: fitted {}, applied {applied}, oracle {best}", m.f1))?;
        }
    }
    within(start.elapsed(), Duration::from_secs(30), "threshold fixtures")?;
    Ok(format!("100 closed + 100 open fixtures in {:.2?}", start.elapsed()))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut queries, mut filtered_seen) = (0usize, 0usize);
    for fixture in 0..100 {
        let n = rng.random_range(2..=30u32);
        let relations = rng.random_range(1..=2u32);
        let mut vocab = Vocabulary::default();
        for e in 0..n {
            vocab.intern_entity(&format!("e{e}"));
        }
        for r in 0..relations {
            vocab.intern_relation(&format!("r{r}"));
        }
        let triple = |rng: &mut ChaCha8Rng| {
            Triple::new(EntityId(rng.random_range(0..n)), RelationId(rng.random_range(0..relations)), EntityId(rng.random_range(0..n)))
        };
        let train: HashSet<Triple> = (0..rng.random_range(0..60)).map(|_| triple(&mut rng)).collect();
        let golds: Vec<Triple> = (0..rng.random_range(1..6)).map(|_| triple(&mut rng)).filter(|g| !train.contains(g)).collect();
        if golds.is_empty() {
            continue;
        }
        // known triples outscore everything, so leaking one into a ranking
        // would change the gold rank
        let mut table = ScoreTable::new("m");
        for h in 0..n {
            for r in 0..relations {
                for t in 0..n {
                    let tr = Triple::new(EntityId(h), RelationId(r), EntityId(t));
                    let s = if train.contains(&tr) { 100.0 } else { rng.random_range(0..5) as f64 };
                    table.insert(tr, s);
                }
            }
        }
        let scorer = TableScorer { table: &table, vocab: &vocab };
        let filter = Filter::train_only(train.iter().copied());
        let result = eval_link_prediction(&scorer, &golds, &filter, &vocab).map_err(|e| e.to_string())?;
        let mut brute = Vec::new();
        for &g in &golds {
            for (query, gold) in [
                (Query::Tail { head: g.head, relation: g.relation }, g.tail),
                (Query::Head { relation: g.relation, tail: g.tail }, g.head),
            ] {
                let score = |e: u32| table.get(&query.completed(EntityId(e))).unwrap();
                let ranked: Vec<u32> = (0..n).filter(|&e| e == gold.0 || !train.contains(&query.completed(EntityId(e)))).collect();
                filtered_seen += n as usize - ranked.len();
                ensure(ranked.iter().all(|&e| e == gold.0 || !train.contains(&query.completed(EntityId(e)))), || "filter".into())?;
                let gs = score(gold.0);
                let higher = ranked.iter().filter(|&&e| score(e) > gs).count();
                let ties = ranked.iter().filter(|&&e| e != gold.0 && score(e) == gs).count();
                brute.push((query, 1.0 + higher as f64 + ties as f64 / 2.0, ranked.len()));
            }
        }
        ensure(result.ranks.len() == brute.len(), || format!("fixture {fixture}: {} ranks", result.ranks.len()))?;
        for (q, (query, rank, candidates)) in result.ranks.iter().zip(&brute) {
            ensure(q.query == *query && q.rank == *rank && q.candidates == *candidates, || {
                format!("fixture {fixture}: rank {} of {} vs oracle {rank} of {candidates}", q.rank, q.candidates)
            })?;
            let keys = scorer.score_query(q.query, n as usize).map_err(|e| e.to_string())?;
            ensure(keys.len() == n as usize, || "score vector length".into())?;
        }
        let count = brute.len() as f64;
        let mrr = brute.iter().map(|b| 1.0 / b.1).sum::<f64>() / count;
        let hits = |k: f64| brute.iter().filter(|b| b.1 <= k).count() as f64 / count;
        ensure(result.mrr == mrr && result.hits1 == hits(1.0) && result.hits10 == hits(10.0), || {
            format!("fixture {fixture}: mrr {} vs {mrr}", result.mrr)
        })?;
        queries += brute.len();

        // confusion metrics on random label pairs
        let pairs: Vec<(Label, Label)> =
            (0..rng.random_range(1..60)).map(|_| (label_of(rng.random_range(0..3)), label_of(rng.random_range(0..3)))).collect();
        let mut closed = Confusion::default();
        let mut open = OpenConfusion::default();
        let mut counts = [[0usize; 3]; 3];
        for &(g, p) in &pairs {
            closed.add(g, p);
            open.add(g, p);
            let idx = |l: Label| match l {
                Label::Negative => 0,
                Label::Unknown => 1,
                Label::Positive => 2,
            };
            counts[idx(g)][idx(p)] += 1;
        }
        let pos = |l: Label| l == Label::Positive;
        let tp = pairs.iter().filter(|(g, p)| pos(*g) && pos(*p)).count() as f64;
        let predicted = pairs.iter().filter(|(_, p)| pos(*p)).count() as f64;
        let actual = pairs.iter().filter(|(g, _)| pos(*g)).count() as f64;
        let correct = pairs.iter().filter(|(g, p)| pos(*g) == pos(*p)).count() as f64;
        let m = closed.metrics();
        let precision = if predicted == 0.0 { 0.0 } else { tp / predicted };
        let recall = if actual == 0.0 { 0.0 } else { tp / actual };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        ensure(m.accuracy == correct / pairs.len() as f64 && m.precision == precision && m.recall == recall, || {
            format!("fixture {fixture}: closed metrics {m:?}")
        })?;
        ensure((m.f1 - f1).abs() < 1e-12, || format!("fixture {fixture}: f1 {} vs {f1}", m.f1))?;
        let om = open.metrics();
        let open_accuracy = (0..3).map(|k| counts[k][k]).sum::<usize>() as f64 / pairs.len() as f64;
        ensure(om.accuracy == open_accuracy && (om.f1 - macro_f1(&counts)).abs() < 1e-12, || {
            format!("fixture {fixture}: open metrics {om:?}")
        })?;
    }
    ensure(filtered_seen > 0, || "no fixture filtered anything".into())?;
    Ok(format!("{queries} ranked queries, {filtered_seen} filtered candidates excluded"))
}

fn open_closed_consistency(run: &Result<SynthRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let bundle = read_bundle(&run.bundle_dir, Vocabulary::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut score = |l: &inferkg_core::curate::LabeledTriple, closed: bool| Scored {
        triple: l.triple,
        score: rng.random_range(0..20) as f64 / 4.0,
        label: if closed { l.label.closed() } else { l.label },
    };
    let valid_closed: Vec<Scored> = bundle.valid.iter().map(|l| score(l, true)).collect();
    let test_open: Vec<Scored> = bundle.test.iter().map(|l| score(l, false)).collect();
    let test_closed: Vec<Scored> = test_open.iter().map(|s| Scored { label: s.label.closed(), ..*s }).collect();
    ensure(test_closed.len() == bundle.test.len(), || "closed view changed the test size".into())?;
    ensure(test_closed.iter().zip(&bundle.test).all(|(s, l)| s.triple == l.triple), || "closed view reordered the test set".into())?;
    let unknowns = bundle.test.iter().filter(|l| l.label == Label::Unknown).count();

    let policy = fit_closed(&valid_closed).map_err(|e| e.to_string())?;
    let degenerate = OpenPolicy {
        per_relation: policy.per_relation.iter().map(|(&r, &t)| (r, (t, t))).collect(),
        global: (policy.global, policy.global),
    };
    let closed_confusion = eval_closed(&test_closed, &policy);
    let open_confusion = eval_open(&test_open, &degenerate);
    ensure(closed_confusion.total() == bundle.test.len(), || "closed evaluation dropped triples".into())?;
    ensure(open_confusion.closed() == closed_confusion, || format!("{:?} vs {closed_confusion:?}", open_confusion.closed()))?;
    for (o, c) in test_open.iter().zip(&test_closed) {
        ensure(degenerate.predict(o).closed() == policy.predict(c), || format!("prediction differs at score {}", o.score))?;
    }
    Ok(format!("{} test triples ({unknowns} unknown) keep their count; degenerate pair matches closed predictions", bundle.test.len()))
}

fn codex_reapplication() -> Verdict {
    let Some(dir) = std::env::var_os("CODEX_M_DIR").map(PathBuf::from) else {
        return Verdict::Skip("CODEX_M_DIR is not set; point it at the CoDEx-m train/valid/test triples to run".into());
    };
    verdict((|| -> Outcome {
        let start = Instant::now();
        let mut vocab = Vocabulary::default();
        let mut read = |name: &str| -> Result<Vec<Triple>, String> {
            let path = dir.join(name);
            let file = File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            ingest_into(BufReader::new(file), IngestMode::Lenient, &mut vocab).map(|r| r.0).map_err(|e| e.to_string())
        };
        let train = read("train.txt")?;
        let held_out: Vec<Triple> = read("valid.txt")?.into_iter().chain(read("test.txt")?).collect();
        let config = PipelineConfig::default();
        let kg = KnowledgeGraph::new(Arc::new(vocab), train);
        let (rules, _) = mine(&kg, &mine_config(&config)).map_err(|e| e.to_string())?;
        let kept = retain_inferential(&kg, &rules, held_out.iter().copied(), config.grounding_cap as usize).len();
        let elapsed = start.elapsed();
        within(elapsed, Duration::from_secs(30 * 60), "re-application")?;
        let (low, high) = (7050.0 * 0.75, 7050.0 * 1.25);
        ensure((low..=high).contains(&(kept as f64)), || format!("kept {kept} of {} positives", held_out.len()))?;
        Ok(format!("kept {kept} of {} positives with {} rules in {elapsed:.0?}", held_out.len(), rules.len()))
    })())
}

/// Every file below `dir` except manifests, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "manifest.json") {
                files.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn determinism(run: &Result<SynthRun, String>, root: &Path) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let config = PipelineConfig { output_dir: root.join("rerun"), ..run.config.clone() };
    ensure(config.threads == 1, || "reruns must be single-threaded".into())?;
    run_pipeline(&config).map_err(|e| e.to_string())?;
    let (a, b) = (tree(&run.bundle_dir), tree(&config.output_dir));
    ensure(a.keys().eq(b.keys()), || "different file sets".into())?;
    for (path, bytes) in &a {
        ensure(bytes == &b[path], || format!("{} differs", path.display()))?;
    }
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok(format!("{} files, {bytes} bytes identical", a.len()))
}

fn main() -> ExitCode {
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().expect("single worker pool");
    let root = tempfile::tempdir().expect("temp dir");
    let run = synth_run(root.path());
    let results = [
        judge("inferential guarantee", || verdict(inferential_guarantee(&run, root.path()))),
        judge("planted rule recovery", || verdict(planted_rule_recovery())),
        judge("grounding oracle equivalence", || verdict(grounding_oracle())),
        judge("confidence product and hop accounting", || verdict(confidence_and_hops(&run))),
        judge("pattern taxonomy", || verdict(pattern_taxonomy())),
        judge("threshold search optimality", || verdict(threshold_optimality())),
        judge("metric oracle", || verdict(metric_oracle())),
        judge("open/closed consistency", || verdict(open_closed_consistency(&run))),
        judge("CoDEx-m re-application", codex_reapplication),
        judge("determinism", || verdict(determinism(&run, root.path()))),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed or skipped, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
