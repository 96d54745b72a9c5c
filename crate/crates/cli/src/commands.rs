//! One function per subcommand. Each reads its inputs, runs one stage and
//! writes its outputs and a manifest into an artifact directory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use inferkg_annotate::{agreement, read_label_map, router, AnnotationService, AppState, ServiceConfig};
use inferkg_core::bundle::{read_bundle, read_labeled};
use inferkg_core::curate::{assemble, balance, DatasetBundle, Label, LabeledTriple, Provenance};
use inferkg_core::eval::{
    breakdown, eval_closed, eval_link_prediction, eval_open, fit_closed, fit_open, sensitivity, write_breakdown_csv,
    write_breakdown_tsv, Axis, BreakdownItem, Filter, LinkPredictionResult, Query, QueryScorer, RuleScorer, ScoreTable,
    Scored, TableScorer,
};
use inferkg_core::kg::{write_triples, IngestMode, KnowledgeGraph, Triple, Vocabulary};
use inferkg_core::pathmeta::{read_path_meta, PathRecord};
use inferkg_core::rules::RuleSet;
use inferkg_core::split::{build_split, extend_paths, InferentialSplit};
use inferkg_core::synth::{kinship_world, KinshipConfig};

use crate::manifest::Manifest;
use crate::pipeline::{
    assemble_config, balance_config, extend_config, ingest_mode, mine_rules, read_candidates, read_corpus,
    read_human_labels, read_rules, resolve_labels, restrict, sample_negatives, split_config, write_bundles,
    write_candidates, write_labeled_file, write_rules, CANDIDATES_FILE, NEGATIVES_FILE, RULES_FILE, UNRESOLVED_FILE,
};
use crate::{require_input, Failure, InStage, PipelineConfig};

pub const TRIPLES_FILE: &str = "triples.txt";
pub const TRAIN_FILE: &str = "train.txt";
pub const SYNTH_WORLD_FILE: &str = "world.txt";
pub const SYNTH_OBSERVED_FILE: &str = "observed.txt";
pub const SYNTH_CONFIG_FILE: &str = "pipeline.conf";
/// Grounding cap per rule when rules answer link prediction queries.
const RULE_QUERY_CAP: usize = 100_000;

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).with_context(|| dir.display().to_string()).in_stage("write")
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).with_context(|| path.display().to_string()).in_stage("write")
}

fn corpus_path<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, Failure> {
    path.as_deref().ok_or_else(|| Failure::usage(anyhow!("invalid `{key}`: must be set for this command")))
}

fn dataset_path(config: &PipelineConfig) -> Result<&Path, Failure> {
    corpus_path(&config.dataset_corpus, "dataset_corpus")
}

fn reference_path(config: &PipelineConfig) -> Result<&Path, Failure> {
    match &config.reference_corpus {
        Some(p) => Ok(p),
        None => dataset_path(config),
    }
}

fn add_inputs(manifest: &mut Manifest, paths: &[&Path]) -> Result<(), Failure> {
    for p in paths {
        require_input(p)?;
        manifest.add_input(p).with_context(|| p.display().to_string()).in_stage("digest")?;
    }
    Ok(())
}

pub fn ingest(
    config: &PipelineConfig,
    input: &Path,
    out: &Path,
    top_entities: Option<usize>,
    top_relations: Option<usize>,
) -> Result<(), Failure> {
    let mut manifest = Manifest::new("ingest", config);
    add_inputs(&mut manifest, &[input])?;
    let mut vocab = Vocabulary::default();
    let triples = manifest.time("ingest", || read_corpus(input, ingest_mode(config), &mut vocab))?;
    let kg = restrict(KnowledgeGraph::new(Arc::new(vocab), triples), top_entities, top_relations, &config.relation_blacklist);
    create_dir(out)?;
    let path = out.join(TRIPLES_FILE);
    let mut w = BufWriter::new(File::create(&path).with_context(|| path.display().to_string()).in_stage("write")?);
    kg.write_tsv(&mut w).and_then(|_| w.flush()).in_stage("write")?;
    let stats = kg.stats();
    print!("{stats}");
    write_text(&out.join("ingest.report"), &stats.to_string())?;
    manifest.count("triples", kg.len());
    manifest.write(out).in_stage("write")
}

pub fn mine(config: &PipelineConfig, out: &Path) -> Result<(), Failure> {
    let corpus = match &config.mining_corpus {
        Some(p) => p.as_path(),
        None => dataset_path(config)?,
    };
    let mut manifest = Manifest::new("mine", config);
    add_inputs(&mut manifest, &[corpus])?;
    let mut vocab = Vocabulary::default();
    let triples = read_corpus(corpus, ingest_mode(config), &mut vocab)?;
    let vocab = Arc::new(vocab);
    let kg = restrict(
        KnowledgeGraph::new(vocab.clone(), triples),
        config.mining_top_entities,
        config.mining_top_relations,
        &config.relation_blacklist,
    );
    let (rules, report) = manifest.time("mine", || mine_rules(&kg, config))?;
    create_dir(out)?;
    write_rules(&out.join(RULES_FILE), &rules, &vocab).in_stage("write")?;
    manifest.count("rules", rules.len());
    manifest.count("candidates", report.candidates);
    manifest.count("iterations", report.iterations as usize);
    println!("rules={}", rules.len());
    manifest.write(out).in_stage("write")
}

fn write_split(out: &Path, split: &InferentialSplit, vocab: &Vocabulary, manifest: &mut Manifest) -> Result<(), Failure> {
    create_dir(out)?;
    let path = out.join(TRAIN_FILE);
    let mut w = BufWriter::new(File::create(&path).with_context(|| path.display().to_string()).in_stage("write")?);
    write_triples(&mut w, vocab, split.train.iter()).and_then(|_| w.flush()).in_stage("write")?;
    write_candidates(&out.join(CANDIDATES_FILE), &split.candidates, vocab).in_stage("write")?;
    manifest.count("train", split.train.len());
    manifest.count("candidates", split.candidates.len());
    manifest.count("paths", split.path_count());
    println!("train={}\ncandidates={}\npaths={}", split.train.len(), split.candidates.len(), split.path_count());
    manifest.write(out).in_stage("write")
}

fn read_split(dir: &Path, vocab: &mut Vocabulary, rules: Option<&RuleSet>) -> Result<InferentialSplit, Failure> {
    let train = read_corpus(&dir.join(TRAIN_FILE), IngestMode::Strict, vocab)?;
    let candidates = read_candidates(&dir.join(CANDIDATES_FILE), vocab, rules)?;
    Ok(InferentialSplit { train: train.into_iter().collect(), candidates })
}

fn load_graph_and_rules(config: &PipelineConfig, rules: &Path) -> Result<(Vocabulary, Vec<Triple>, RuleSet), Failure> {
    let corpus = dataset_path(config)?;
    let mut vocab = Vocabulary::default();
    let triples = read_corpus(corpus, ingest_mode(config), &mut vocab)?;
    let rules = read_rules(rules, &mut vocab)?;
    Ok((vocab, triples, rules))
}

pub fn split(config: &PipelineConfig, rules_path: &Path, out: &Path) -> Result<(), Failure> {
    let mut manifest = Manifest::new("split", config);
    add_inputs(&mut manifest, &[dataset_path(config)?, rules_path])?;
    let (vocab, triples, rules) = load_graph_and_rules(config, rules_path)?;
    let vocab = Arc::new(vocab);
    let kg = restrict(
        KnowledgeGraph::new(vocab.clone(), triples),
        config.dataset_top_entities,
        config.dataset_top_relations,
        &config.relation_blacklist,
    );
    let split = manifest.time("split", || build_split(&kg, &rules, &split_config(config))).in_stage("split")?;
    write_split(out, &split, &vocab, &mut manifest)
}

pub fn extend(config: &PipelineConfig, rules_path: &Path, split_dir: &Path, out: &Path) -> Result<(), Failure> {
    let mut manifest = Manifest::new("extend", config);
    add_inputs(&mut manifest, &[dataset_path(config)?, rules_path, split_dir])?;
    let (mut vocab, triples, rules) = load_graph_and_rules(config, rules_path)?;
    let split = read_split(split_dir, &mut vocab, Some(&rules))?;
    split.check_invariants().map_err(|e| anyhow!("{}: {e}", split_dir.display())).in_stage("extend")?;
    let vocab = Arc::new(vocab);
    let kg = restrict(
        KnowledgeGraph::new(vocab.clone(), triples),
        config.dataset_top_entities,
        config.dataset_top_relations,
        &config.relation_blacklist,
    );
    let extended = manifest.time("extend", || extend_paths(&split, &rules, &kg, &extend_config(config)));
    write_split(out, &extended, &vocab, &mut manifest)
}

pub fn balance_split(config: &PipelineConfig, split_dir: &Path, out: &Path) -> Result<(), Failure> {
    let mut manifest = Manifest::new("balance", config);
    add_inputs(&mut manifest, &[split_dir])?;
    let mut vocab = Vocabulary::default();
    let split = read_split(split_dir, &mut vocab, None)?;
    let candidates = manifest.time("balance", || balance(&split.candidates, &balance_config(config)));
    let balanced = InferentialSplit { train: split.train, candidates };
    write_split(out, &balanced, &vocab, &mut manifest)
}

/// Reference graph, split and human labels in one vocabulary.
struct LabelInputs {
    vocab: Arc<Vocabulary>,
    reference: KnowledgeGraph,
    split: InferentialSplit,
    human: HashMap<Triple, Label>,
}

fn label_inputs(config: &PipelineConfig, split_dir: &Path, manifest: &mut Manifest) -> Result<LabelInputs, Failure> {
    let reference_path = reference_path(config)?;
    let mut inputs = vec![reference_path, split_dir];
    inputs.extend(config.human_labels.as_deref());
    add_inputs(manifest, &inputs)?;
    let mut vocab = Vocabulary::default();
    let reference = read_corpus(reference_path, ingest_mode(config), &mut vocab)?;
    let split = read_split(split_dir, &mut vocab, None)?;
    let human = match &config.human_labels {
        Some(p) => read_human_labels(p, &mut vocab)?,
        None => HashMap::new(),
    };
    let vocab = Arc::new(vocab);
    Ok(LabelInputs { reference: KnowledgeGraph::new(vocab.clone(), reference), vocab, split, human })
}

pub fn negsample(config: &PipelineConfig, split_dir: &Path, out: &Path) -> Result<(), Failure> {
    let mut manifest = Manifest::new("negsample", config);
    let inputs = label_inputs(config, split_dir, &mut manifest)?;
    let resolution = resolve_labels(&inputs.split.candidates, &inputs.reference, &inputs.human);
    let forbidden: HashSet<Triple> = inputs.split.train.iter().copied().collect();
    let (needed, outcome) = manifest.time("negsample", || {
        sample_negatives(&resolution.labeled, &inputs.split.candidates, &inputs.reference, forbidden, config)
    });
    create_dir(out)?;
    write_labeled_file(&out.join(NEGATIVES_FILE), &outcome.negatives, &inputs.vocab).in_stage("write")?;
    manifest.count("needed", needed);
    manifest.count("made", outcome.negatives.len());
    println!("needed={needed}\nmade={}\nshortfall={}", outcome.negatives.len(), outcome.shortfall);
    manifest.write(out).in_stage("write")
}

pub fn assemble_bundle(
    config: &PipelineConfig,
    split_dir: &Path,
    negatives: Option<&Path>,
    out: &Path,
) -> Result<(), Failure> {
    let mut manifest = Manifest::new("assemble", config);
    if let Some(n) = negatives {
        add_inputs(&mut manifest, &[n])?;
    }
    let inputs = label_inputs(config, split_dir, &mut manifest)?;
    let resolution = resolve_labels(&inputs.split.candidates, &inputs.reference, &inputs.human);
    let mut labeled = resolution.labeled.clone();
    if let Some(path) = negatives {
        // corruption output only mentions entities already in the vocabulary
        let mut vocab = (*inputs.vocab).clone();
        let name = path.display().to_string();
        let file = File::open(path).with_context(|| name.clone()).in_stage("assemble")?;
        let rows = read_labeled(BufReader::new(file), &mut vocab, &name).in_stage("assemble")?;
        if vocab.entities.len() != inputs.vocab.entities.len() || vocab.relations.len() != inputs.vocab.relations.len() {
            return Err(Failure::Stage { stage: "assemble", error: anyhow!("{name} mentions labels outside the split") });
        }
        for (t, label) in rows {
            if label != Label::Negative {
                return Err(Failure::Stage { stage: "assemble", error: anyhow!("{name}: corruption labels must be -1") });
            }
            labeled.push(LabeledTriple::new(t, label, Provenance::Corruption));
        }
    }
    let (bundle, dense) = manifest
        .time("assemble", || {
            assemble(inputs.vocab.clone(), &inputs.split.train, &labeled, &inputs.split.candidates, &assemble_config(config))
        })
        .in_stage("assemble")?;
    create_dir(out)?;
    write_candidates(&out.join(UNRESOLVED_FILE), &resolution.unresolved, &inputs.vocab).in_stage("write")?;
    manifest.count("valid", bundle.valid.len());
    manifest.count("test", bundle.test.len());
    manifest.count("unresolved", resolution.unresolved.len());
    write_bundles(out, &bundle, dense.as_ref(), &manifest)?;
    println!("valid={}\ntest={}\nunresolved={}", bundle.valid.len(), bundle.test.len(), resolution.unresolved.len());
    Ok(())
}

pub struct ServeOptions<'a> {
    pub store: &'a Path,
    pub enqueue: Option<&'a Path>,
    pub bind: &'a str,
    pub lease_secs: u64,
    pub relabel: bool,
}

pub fn annotate_serve(config: &PipelineConfig, opts: &ServeOptions) -> Result<(), Failure> {
    let mut manifest = Manifest::new("annotate-serve", config);
    if let Some(p) = opts.enqueue {
        add_inputs(&mut manifest, &[p])?;
    }
    let service_config = ServiceConfig { lease_ms: opts.lease_secs * 1000, relabel: opts.relabel, ..ServiceConfig::default() };
    let mut service = AnnotationService::open(opts.store, service_config).in_stage("annotate-serve")?;
    if let Some(path) = opts.enqueue {
        let records = read_records(path).in_stage("annotate-serve")?;
        let now = (inferkg_annotate::system_clock())();
        let report = service.enqueue(records, now).in_stage("annotate-serve")?;
        log::info!("queued {} tasks, {} already present", report.added, report.skipped);
    }
    manifest.write(opts.store).in_stage("annotate-serve")?;
    let app = router(AppState::new(service));
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().in_stage("annotate-serve")?;
    runtime
        .block_on(async {
            let listener = tokio::net::TcpListener::bind(opts.bind).await.with_context(|| opts.bind.to_owned())?;
            log::info!("listening on {}", listener.local_addr()?);
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
            anyhow::Ok(())
        })
        .in_stage("annotate-serve")
}

/// Path records as stored, without interning.
fn read_records(path: &Path) -> anyhow::Result<Vec<PathRecord>> {
    let file = File::open(path).with_context(|| path.display().to_string())?;
    let mut vocab = Vocabulary::default();
    let candidates = read_path_meta(BufReader::new(file), &mut vocab).with_context(|| path.display().to_string())?;
    Ok(candidates.iter().map(|(c, paths)| PathRecord::from_paths(c, paths, &vocab)).collect())
}

fn load_bundle(dir: &Path, vocab: Vocabulary) -> Result<DatasetBundle, Failure> {
    require_input(dir)?;
    read_bundle(dir, vocab).with_context(|| dir.display().to_string()).in_stage("load-bundle")
}

fn load_scores(path: &Path, vocab: &Vocabulary, model: &str) -> Result<ScoreTable, Failure> {
    require_input(path)?;
    let file = File::open(path).with_context(|| path.display().to_string()).in_stage("load-scores")?;
    ScoreTable::read(BufReader::new(file), vocab, model).with_context(|| path.display().to_string()).in_stage("load-scores")
}

/// Valid and test joined with scores, under closed or open labels.
fn scored(bundle: &DatasetBundle, table: &ScoreTable, closed: bool) -> anyhow::Result<(Vec<Scored>, Vec<Scored>)> {
    let view = |l: &LabeledTriple| (l.triple, if closed { l.label.closed() } else { l.label });
    let valid = table.attach(bundle.valid.iter().map(view), &bundle.vocab)?;
    let test = table.attach(bundle.test.iter().map(view), &bundle.vocab)?;
    Ok((valid, test))
}

pub struct EvalInputs<'a> {
    pub bundle: &'a Path,
    pub scores: &'a Path,
    pub model: &'a str,
    pub out: &'a Path,
}

pub fn eval_tc(config: &PipelineConfig, args: &EvalInputs) -> Result<String, Failure> {
    let mut manifest = Manifest::new("eval-tc", config);
    add_inputs(&mut manifest, &[args.bundle, args.scores])?;
    let bundle = load_bundle(args.bundle, Vocabulary::default())?;
    let table = load_scores(args.scores, &bundle.vocab, args.model)?;
    let report = manifest.time("eval-tc", || -> anyhow::Result<String> {
        let (valid, test) = scored(&bundle, &table, true)?;
        let policy = fit_closed(&valid)?;
        let c = eval_closed(&test, &policy);
        let mut text = format!("model={}\nsetting=closed\n", args.model);
        let _ = writeln!(text, "tp={}\nfp={}\ntn={}\nfn={}", c.tp, c.fp, c.tn, c.fn_);
        text.push_str(&c.metrics().to_string());
        Ok(text)
    });
    let report = report.in_stage("eval-tc")?;
    create_dir(args.out)?;
    write_text(&args.out.join("eval-tc.report"), &report)?;
    manifest.write(args.out).in_stage("write")?;
    Ok(report)
}

pub fn eval_tc_open(config: &PipelineConfig, args: &EvalInputs, grid: usize) -> Result<String, Failure> {
    let mut manifest = Manifest::new("eval-tc-open", config);
    add_inputs(&mut manifest, &[args.bundle, args.scores])?;
    let bundle = load_bundle(args.bundle, Vocabulary::default())?;
    let table = load_scores(args.scores, &bundle.vocab, args.model)?;
    let report = manifest.time("eval-tc-open", || -> anyhow::Result<String> {
        let (valid, test) = scored(&bundle, &table, false)?;
        let policy = fit_open(&valid)?;
        let c = eval_open(&test, &policy);
        let mut text = format!("model={}\nsetting=open\n", args.model);
        text.push_str(&c.metrics().to_string());
        let rows = ["neg", "unk", "pos"];
        for (gold, row) in rows.iter().zip(c.counts) {
            for (pred, n) in rows.iter().zip(row) {
                let _ = writeln!(text, "confusion.{gold}.{pred}={n}");
            }
        }
        let closed = c.closed().metrics();
        let _ = writeln!(text, "closed_view.accuracy={}\nclosed_view.f1={}", closed.accuracy, closed.f1);
        let s = sensitivity(&valid, &test, grid);
        let _ = writeln!(
            text,
            "sensitivity.pairs={}\nsensitivity.best={}\nsensitivity.worst={}\nsensitivity.mean={}",
            s.pairs, s.best, s.worst, s.mean
        );
        Ok(text)
    });
    let report = report.in_stage("eval-tc-open")?;
    create_dir(args.out)?;
    write_text(&args.out.join("eval-tc-open.report"), &report)?;
    manifest.write(args.out).in_stage("write")?;
    Ok(report)
}

/// Where link prediction scores come from.
pub enum LpSource<'a> {
    Scores(&'a Path),
    Rules(&'a Path),
}

fn lp_filter(bundle: &DatasetBundle, all: bool) -> Filter {
    let mut filter = Filter::train_only(bundle.train.iter().copied());
    if all {
        filter.extra = bundle.labeled().filter(|l| l.label == Label::Positive).map(|l| l.triple).collect();
    }
    filter
}

fn test_positives(bundle: &DatasetBundle) -> Vec<Triple> {
    bundle.test.iter().filter(|l| l.label == Label::Positive).map(|l| l.triple).collect()
}

/// Loads the bundle and runs link prediction with the given source.
fn run_lp(bundle_dir: &Path, source: &LpSource, all: bool) -> Result<(DatasetBundle, String, LinkPredictionResult), Failure> {
    let bundle = load_bundle(bundle_dir, Vocabulary::default())?;
    let filter = lp_filter(&bundle, all);
    let positives = test_positives(&bundle);
    let (model, result) = match source {
        LpSource::Scores(path) => {
            let table = load_scores(path, &bundle.vocab, "scores")?;
            let scorer = TableScorer { table: &table, vocab: &bundle.vocab };
            ("scores", eval_link_prediction(&scorer, &positives, &filter, &bundle.vocab))
        }
        LpSource::Rules(path) => {
            let mut vocab = (*bundle.vocab).clone();
            let rules = read_rules(path, &mut vocab)?;
            let train = KnowledgeGraph::new(Arc::new(vocab), bundle.train.iter().copied());
            let scorer = RuleScorer { train: &train, rules: &rules, cap: RULE_QUERY_CAP };
            ("rules", eval_link_prediction(&scorer as &dyn QueryScorer, &positives, &filter, &bundle.vocab))
        }
    };
    let result = result.in_stage("eval-lp")?;
    Ok((bundle, model.to_owned(), result))
}

pub fn eval_lp(config: &PipelineConfig, bundle_dir: &Path, source: &LpSource, all: bool, out: &Path) -> Result<String, Failure> {
    let mut manifest = Manifest::new("eval-lp", config);
    let source_path = match source {
        LpSource::Scores(p) | LpSource::Rules(p) => *p,
    };
    add_inputs(&mut manifest, &[bundle_dir, source_path])?;
    let (bundle, model, result) = manifest.time("eval-lp", || run_lp(bundle_dir, source, all))?;
    let report = format!("model={model}\n{result}");
    create_dir(out)?;
    write_text(&out.join("eval-lp.report"), &report)?;
    let mut ranks = String::from("head\trelation\ttail\tquery\trank\tcandidates\n");
    for q in &result.ranks {
        let _ = writeln!(ranks, "{}\t{}\t{}\t{}", bundle.vocab.display(&q.triple), q.query, q.rank, q.candidates);
    }
    write_text(&out.join("ranks.tsv"), &ranks)?;
    manifest.write(out).in_stage("write")?;
    Ok(report)
}

pub struct ReportInputs<'a> {
    pub bundle: &'a Path,
    /// Triple classification scores for valid and test.
    pub scores: Option<&'a Path>,
    /// Full score table for link prediction.
    pub lp_scores: Option<&'a Path>,
    pub rules: Option<&'a Path>,
    pub out: &'a Path,
}

fn write_breakdowns(out: &Path, stem: &str, rows: &[inferkg_core::eval::BreakdownRow], metrics: &[&str]) -> Result<(), Failure> {
    let mut tsv = Vec::new();
    write_breakdown_tsv(rows, metrics, &mut tsv).in_stage("report")?;
    std::fs::write(out.join(format!("{stem}.tsv")), tsv).in_stage("write")?;
    for axis in [Axis::Pattern, Axis::Hop, Axis::NegativeType] {
        let mut csv = Vec::new();
        write_breakdown_csv(rows, axis, metrics, &mut csv).in_stage("report")?;
        std::fs::write(out.join(format!("{stem}-{axis}.csv")), csv).in_stage("write")?;
    }
    Ok(())
}

/// Dataset statistics plus stratified breakdowns of whichever evaluations
/// have inputs.
pub fn report(config: &PipelineConfig, args: &ReportInputs) -> Result<String, Failure> {
    let mut manifest = Manifest::new("report", config);
    let mut inputs = vec![args.bundle];
    inputs.extend(args.scores);
    inputs.extend(args.lp_scores);
    inputs.extend(args.rules);
    add_inputs(&mut manifest, &inputs)?;
    let bundle = load_bundle(args.bundle, Vocabulary::default())?;
    create_dir(args.out)?;
    write_text(&args.out.join("stats.report"), &inferkg_core::curate::stats(&bundle).to_string())?;
    let mut summary = String::new();

    if let Some(path) = args.scores {
        let table = load_scores(path, &bundle.vocab, "scores")?;
        let items = manifest
            .time("report-tc", || -> anyhow::Result<Vec<BreakdownItem>> {
                let (valid_c, test_c) = scored(&bundle, &table, true)?;
                let (valid_o, test_o) = scored(&bundle, &table, false)?;
                let closed = fit_closed(&valid_c)?;
                let open = fit_open(&valid_o)?;
                Ok(test_c
                    .iter()
                    .zip(&test_o)
                    .map(|(c, o)| BreakdownItem {
                        triple: c.triple,
                        values: vec![(closed.predict(c) == c.label) as u8 as f64, (open.predict(o) == o.label) as u8 as f64],
                    })
                    .collect())
            })
            .in_stage("report")?;
        let rows = breakdown(&items, &bundle).in_stage("report")?;
        write_breakdowns(args.out, "breakdown-tc", &rows, &["closed_accuracy", "open_accuracy"])?;
    }

    let mut hits1: BTreeMap<&str, f64> = BTreeMap::new();
    let sources = [args.lp_scores.map(LpSource::Scores), args.rules.map(LpSource::Rules)];
    for source in sources.iter().flatten() {
        let (_, model, result) = manifest.time("report-lp", || run_lp(args.bundle, source, false))?;
        let items: Vec<BreakdownItem> = result
            .ranks
            .iter()
            .filter(|q| matches!(q.query, Query::Tail { .. }))
            .map(|q| BreakdownItem {
                triple: q.triple,
                values: vec![1.0 / q.rank, (q.rank <= 1.0) as u8 as f64, (q.rank <= 10.0) as u8 as f64],
            })
            .collect();
        let rows = breakdown(&items, &bundle).in_stage("report")?;
        write_breakdowns(args.out, &format!("breakdown-lp-{model}"), &rows, &["mrr", "hits@1", "hits@10"])?;
        let _ = writeln!(summary, "{model}.mrr={}\n{model}.hits@1={}\n{model}.hits@10={}", result.mrr, result.hits1, result.hits10);
        hits1.insert(if model == "rules" { "rules" } else { "scores" }, result.hits1);
    }
    if let (Some(r), Some(s)) = (hits1.get("rules"), hits1.get("scores")) {
        let _ = writeln!(summary, "hits@1.leader={}", if r >= s { "rules" } else { "scores" });
    }
    write_text(&args.out.join("summary.report"), &summary)?;
    manifest.write(args.out).in_stage("write")?;
    Ok(summary)
}

pub struct SynthOptions {
    pub families: usize,
    pub mother_rate: f64,
    pub hidden_fraction: f64,
}

/// Writes the full world (the reference), the observed graph with hidden
/// triples removed, and a config file pointing at both.
pub fn synth(config: &PipelineConfig, opts: &SynthOptions, out: &Path) -> Result<(), Failure> {
    for (field, v) in [("mother_rate", opts.mother_rate), ("hidden_fraction", opts.hidden_fraction)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Failure::usage(anyhow!("invalid `{field}`: must be in [0, 1], got {v}")));
        }
    }
    let mut manifest = Manifest::new("synth", config);
    let kinship = KinshipConfig {
        families: opts.families,
        mother_rate: opts.mother_rate,
        hidden_fraction: opts.hidden_fraction,
        seed: config.seed,
        ..KinshipConfig::default()
    };
    let world = manifest.time("synth", || kinship_world(&kinship));
    create_dir(out)?;
    for (name, triples) in [(SYNTH_WORLD_FILE, &world.world), (SYNTH_OBSERVED_FILE, &world.observed)] {
        let path = out.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| path.display().to_string()).in_stage("write")?);
        write_triples(&mut w, &world.vocab, triples.iter()).and_then(|_| w.flush()).in_stage("write")?;
    }
    let mut pipeline = PipelineConfig {
        dataset_corpus: Some(out.join(SYNTH_OBSERVED_FILE)),
        reference_corpus: Some(out.join(SYNTH_WORLD_FILE)),
        output_dir: out.join("bundle"),
        seed: config.seed,
        ..PipelineConfig::default()
    };
    pipeline.mining_budget = inferkg_core::rules::MineBudget::Iterations(100_000);
    write_text(&out.join(SYNTH_CONFIG_FILE), &pipeline.to_text())?;
    manifest.count("world", world.world.len());
    manifest.count("observed", world.observed.len());
    println!("world={}\nobserved={}", world.world.len(), world.observed.len());
    manifest.write(out).in_stage("write")
}

/// Share of shared triples on which two label exports agree.
pub fn label_agreement(a: &Path, b: &Path) -> Result<f64, Failure> {
    let read = |p: &Path| -> Result<_, Failure> {
        require_input(p)?;
        let file = File::open(p).with_context(|| p.display().to_string()).in_stage("agreement")?;
        read_label_map(BufReader::new(file)).with_context(|| p.display().to_string()).in_stage("agreement")
    };
    agreement(&read(a)?, &read(b)?).in_stage("agreement")
}
