//! Construction stages and the end-to-end run.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use inferkg_core::bundle::{read_labeled, write_bundle};
use inferkg_core::curate::{
    assemble, auto_label, balance, corrupt_negatives, AssembleConfig, BalanceConfig, CorruptionOutcome, DatasetBundle,
    Label, LabeledTriple, Provenance,
};
use inferkg_core::kg::{frequency_filter, ingest_into, IngestMode, KnowledgeGraph, Triple, Vocabulary};
use inferkg_core::pathmeta::{read_path_meta, write_path_meta};
use inferkg_core::rules::{export_rules, import_rules, mine, MineConfig, MineReport, RuleSet};
use inferkg_core::split::{build_split, extend_paths, path_entities, ExtendConfig, GroundedPath, SplitConfig};

use crate::manifest::Manifest;
use crate::{require_input, Failure, InStage, PipelineConfig};

pub const RULES_FILE: &str = "rules.txt";
pub const CANDIDATES_FILE: &str = "candidates.meta";
pub const UNRESOLVED_FILE: &str = "unresolved.meta";
pub const NEGATIVES_FILE: &str = "negatives.txt";
pub const PIPELINE_REPORT: &str = "pipeline.report";
pub const DENSE_DIR: &str = "dense";

pub type Candidates = BTreeMap<Triple, Vec<GroundedPath>>;

pub fn ingest_mode(config: &PipelineConfig) -> IngestMode {
    if config.lenient {
        IngestMode::Lenient
    } else {
        IngestMode::Strict
    }
}

pub fn read_corpus(path: &Path, mode: IngestMode, vocab: &mut Vocabulary) -> Result<Vec<Triple>, Failure> {
    require_input(path)?;
    let file = File::open(path).with_context(|| path.display().to_string()).in_stage("ingest")?;
    let (triples, report) =
        ingest_into(BufReader::new(file), mode, vocab).with_context(|| path.display().to_string()).in_stage("ingest")?;
    log::info!(
        "{}: {} lines, {} triples, {} duplicates, {} skipped",
        path.display(),
        report.lines_read,
        report.kept,
        report.duplicates,
        report.skipped
    );
    Ok(triples)
}

/// Frequency cut-offs; either bound may be absent.
pub fn restrict(kg: KnowledgeGraph, top_entities: Option<usize>, top_relations: Option<usize>, blacklist: &[String]) -> KnowledgeGraph {
    if top_entities.is_none() && top_relations.is_none() && blacklist.is_empty() {
        return kg;
    }
    let blacklist: HashSet<String> = blacklist.iter().cloned().collect();
    frequency_filter(&kg, top_entities.unwrap_or(usize::MAX), top_relations.unwrap_or(usize::MAX), &blacklist)
}

pub fn read_rules(path: &Path, vocab: &mut Vocabulary) -> Result<RuleSet, Failure> {
    require_input(path)?;
    let file = File::open(path).with_context(|| path.display().to_string()).in_stage("load-rules")?;
    import_rules(BufReader::new(file), vocab).with_context(|| path.display().to_string()).in_stage("load-rules")
}

pub fn write_rules(path: &Path, rules: &RuleSet, vocab: &Vocabulary) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| path.display().to_string())?);
    export_rules(rules, vocab, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_candidates(path: &Path, vocab: &mut Vocabulary, rules: Option<&RuleSet>) -> Result<Candidates, Failure> {
    require_input(path)?;
    let file = File::open(path).with_context(|| path.display().to_string()).in_stage("load-paths")?;
    let candidates =
        read_path_meta(BufReader::new(file), vocab).with_context(|| path.display().to_string()).in_stage("load-paths")?;
    if let Some(rules) = rules {
        let bad = candidates.values().flatten().flat_map(|p| &p.rules_used).find(|r| r.0 as usize >= rules.len());
        if let Some(r) = bad {
            return Err(Failure::Stage {
                stage: "load-paths",
                error: anyhow!("{} cites rule {} but the rule file has {} rules", path.display(), r.0, rules.len()),
            });
        }
    }
    Ok(candidates)
}

pub fn write_candidates(path: &Path, candidates: &Candidates, vocab: &Vocabulary) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| path.display().to_string())?);
    write_path_meta(candidates, vocab, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Human labels keyed by triple, interned into `vocab`.
pub fn read_human_labels(path: &Path, vocab: &mut Vocabulary) -> Result<HashMap<Triple, Label>, Failure> {
    require_input(path)?;
    let name = path.display().to_string();
    let file = File::open(path).with_context(|| name.clone()).in_stage("ingest")?;
    let rows = read_labeled(BufReader::new(file), vocab, &name).in_stage("ingest")?;
    Ok(rows.into_iter().collect())
}

pub fn mine_config(config: &PipelineConfig) -> MineConfig {
    MineConfig {
        budget: config.mining_budget,
        lambda_min: config.lambda_min,
        max_hops: config.max_rule_hops,
        seed: config.seed,
        threads: config.threads,
        grounding_cap: config.grounding_cap as u64,
        min_support: config.min_support,
    }
}

pub fn split_config(config: &PipelineConfig) -> SplitConfig {
    SplitConfig { seed: config.seed, ..SplitConfig::default() }
}

pub fn extend_config(config: &PipelineConfig) -> ExtendConfig {
    ExtendConfig {
        max_extra_hops: config.max_extra_hops,
        extend_fraction: config.extend_fraction,
        seed: config.seed,
        ..ExtendConfig::default()
    }
}

pub fn balance_config(config: &PipelineConfig) -> BalanceConfig {
    BalanceConfig { max_share: config.balance_max_share, hop_parity_share: config.hop_parity_share, seed: config.seed }
}

pub fn assemble_config(config: &PipelineConfig) -> AssembleConfig {
    AssembleConfig { dense_threshold: config.dense_lambda, parity_tolerance: config.parity_tolerance, seed: config.seed }
}

pub fn mine_rules(kg: &KnowledgeGraph, config: &PipelineConfig) -> Result<(RuleSet, MineReport), Failure> {
    let (rules, report) = mine(kg, &mine_config(config)).in_stage("mine")?;
    log::info!(
        "mined {} rules from {} candidates in {} iterations ({} capped)",
        rules.len(),
        report.candidates,
        report.iterations,
        report.cap_hits
    );
    Ok((rules, report))
}

/// Candidates labeled so far and the rest, which need annotation.
#[derive(Clone, Debug, Default)]
pub struct Resolution {
    pub labeled: Vec<LabeledTriple>,
    pub unresolved: Candidates,
    pub kg_auto: usize,
    pub human: usize,
}

/// Reference-graph positives first; remaining candidates take a human
/// label when one exists.
pub fn resolve_labels(candidates: &Candidates, reference: &KnowledgeGraph, human: &HashMap<Triple, Label>) -> Resolution {
    let (mut labeled, open) = auto_label(candidates, reference);
    let kg_auto = labeled.len();
    let mut unresolved = Candidates::new();
    for t in open {
        match human.get(&t) {
            Some(&label) => labeled.push(LabeledTriple::new(t, label, Provenance::Human)),
            None => {
                unresolved.insert(t, candidates[&t].clone());
            }
        }
    }
    let human = labeled.len() - kg_auto;
    Resolution { labeled, unresolved, kg_auto, human }
}

/// Corruption negatives making up the gap between positives and the
/// other labels. Entities come from the candidates' paths.
pub fn sample_negatives(
    labeled: &[LabeledTriple],
    candidates: &Candidates,
    reference: &KnowledgeGraph,
    mut forbidden: HashSet<Triple>,
    config: &PipelineConfig,
) -> (usize, CorruptionOutcome) {
    let positives = labeled.iter().filter(|l| l.label == Label::Positive).count();
    let needed = positives.saturating_sub(labeled.len() - positives);
    let pool: Vec<_> = path_entities(candidates.values().flatten()).into_iter().collect();
    forbidden.extend(candidates.keys().copied());
    forbidden.extend(labeled.iter().map(|l| l.triple));
    let outcome = corrupt_negatives(labeled, reference, &forbidden, &pool, needed, config.exclusivity, config.seed);
    if outcome.shortfall > 0 {
        log::warn!("corruption produced {} of {} negatives", outcome.negatives.len(), needed);
    }
    (needed, outcome)
}

pub fn write_labeled_file(path: &Path, labeled: &[LabeledTriple], vocab: &Vocabulary) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| path.display().to_string())?);
    inferkg_core::bundle::write_labeled(labeled, vocab, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes the bundle, its dense sibling and a manifest into each.
pub fn write_bundles(
    dir: &Path,
    bundle: &DatasetBundle,
    dense: Option<&DatasetBundle>,
    manifest: &Manifest,
) -> Result<(), Failure> {
    write_bundle(bundle, dir).with_context(|| dir.display().to_string()).in_stage("write")?;
    manifest.write(dir).in_stage("write")?;
    if let Some(dense) = dense {
        let dense_dir = dir.join(DENSE_DIR);
        write_bundle(dense, &dense_dir).with_context(|| dense_dir.display().to_string()).in_stage("write")?;
        manifest.write(&dense_dir).in_stage("write")?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct PipelineSummary {
    pub output_dir: PathBuf,
    pub counts: Vec<(&'static str, usize)>,
    pub rules: RuleSet,
    pub bundle: DatasetBundle,
    pub dense: Option<DatasetBundle>,
}

fn write_report(path: &Path, counts: &[(&'static str, usize)]) -> anyhow::Result<()> {
    let text: String = counts.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    std::fs::write(path, text).with_context(|| path.display().to_string())
}

/// ingest, mine, split, extend, balance, label, negsample, assemble.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary, Failure> {
    config.validate()?;
    let dataset_path =
        config.dataset_corpus.clone().ok_or_else(|| Failure::usage(anyhow!("invalid `dataset_corpus`: must be set")))?;
    let mining_path = config.mining_corpus.clone().unwrap_or_else(|| dataset_path.clone());
    let reference_path = config.reference_corpus.clone().unwrap_or_else(|| dataset_path.clone());
    let mut inputs = vec![&dataset_path, &mining_path, &reference_path];
    inputs.extend(config.human_labels.as_ref());
    for p in &inputs {
        require_input(p)?;
    }
    let out = config.output_dir.clone();
    std::fs::create_dir_all(&out).with_context(|| out.display().to_string()).in_stage("write")?;

    let mut manifest = Manifest::new("pipeline", config);
    for p in inputs.iter().collect::<BTreeSet<_>>() {
        manifest.add_input(p).with_context(|| p.display().to_string()).in_stage("ingest")?;
    }

    let mode = ingest_mode(config);
    let mut vocab = Vocabulary::default();
    let (dataset, mining_triples, reference_triples, human) = manifest.time("ingest", || -> Result<_, Failure> {
        let dataset = read_corpus(&dataset_path, mode, &mut vocab)?;
        let mining = if mining_path == dataset_path { None } else { Some(read_corpus(&mining_path, mode, &mut vocab)?) };
        let reference =
            if reference_path == dataset_path { None } else { Some(read_corpus(&reference_path, mode, &mut vocab)?) };
        let human = match &config.human_labels {
            Some(p) => read_human_labels(p, &mut vocab)?,
            None => HashMap::new(),
        };
        Ok((dataset, mining, reference, human))
    })?;
    let vocab = Arc::new(vocab);
    let dataset_kg = restrict(
        KnowledgeGraph::new(vocab.clone(), dataset),
        config.dataset_top_entities,
        config.dataset_top_relations,
        &config.relation_blacklist,
    );
    let mining_kg = match mining_triples {
        Some(t) => restrict(
            KnowledgeGraph::new(vocab.clone(), t),
            config.mining_top_entities,
            config.mining_top_relations,
            &config.relation_blacklist,
        ),
        None => dataset_kg.clone(),
    };
    let reference_kg = reference_triples.map_or_else(|| dataset_kg.clone(), |t| KnowledgeGraph::new(vocab.clone(), t));
    if dataset_kg.is_empty() {
        return Err(Failure::Stage { stage: "ingest", error: anyhow!("{} has no triples left", dataset_path.display()) });
    }

    let (rules, mine_report) = manifest.time("mine", || mine_rules(&mining_kg, config))?;
    write_rules(&out.join(RULES_FILE), &rules, &vocab).in_stage("mine")?;

    let split = manifest.time("split", || build_split(&dataset_kg, &rules, &split_config(config))).in_stage("split")?;
    let extended = manifest.time("extend", || extend_paths(&split, &rules, &dataset_kg, &extend_config(config)));
    extended.check_invariants().map_err(|e| anyhow!(e)).in_stage("extend")?;
    let balanced = manifest.time("balance", || balance(&extended.candidates, &balance_config(config)));

    let resolution = manifest.time("label", || resolve_labels(&balanced, &reference_kg, &human));
    write_candidates(&out.join(UNRESOLVED_FILE), &resolution.unresolved, &vocab).in_stage("label")?;

    let forbidden: HashSet<Triple> =
        dataset_kg.triples().iter().chain(&extended.train).chain(extended.candidates.keys()).copied().collect();
    let (needed, negatives) = manifest.time("negsample", || {
        sample_negatives(&resolution.labeled, &balanced, &reference_kg, forbidden, config)
    });

    let mut labeled = resolution.labeled.clone();
    labeled.extend(negatives.negatives.iter().cloned());
    let (bundle, dense) = manifest
        .time("assemble", || assemble(vocab.clone(), &extended.train, &labeled, &balanced, &assemble_config(config)))
        .in_stage("assemble")?;

    let counts = vec![
        ("corpus.dataset", dataset_kg.len()),
        ("corpus.mining", mining_kg.len()),
        ("corpus.reference", reference_kg.len()),
        ("mine.candidates", mine_report.candidates),
        ("mine.rules", rules.len()),
        ("split.train", split.train.len()),
        ("split.candidates", split.candidates.len()),
        ("extend.train", extended.train.len()),
        ("extend.paths", extended.path_count()),
        ("balance.candidates", balanced.len()),
        ("label.kg_auto", resolution.kg_auto),
        ("label.human", resolution.human),
        ("label.unresolved", resolution.unresolved.len()),
        ("negsample.needed", needed),
        ("negsample.made", negatives.negatives.len()),
        ("bundle.train", bundle.train.len()),
        ("bundle.valid", bundle.valid.len()),
        ("bundle.test", bundle.test.len()),
        ("dense.valid", dense.as_ref().map_or(0, |d| d.valid.len())),
        ("dense.test", dense.as_ref().map_or(0, |d| d.test.len())),
    ];
    for (k, v) in &counts {
        manifest.count(k, *v);
    }
    write_report(&out.join(PIPELINE_REPORT), &counts).in_stage("write")?;
    write_bundles(&out, &bundle, dense.as_ref(), &manifest)?;
    Ok(PipelineSummary { output_dir: out, counts, rules, bundle, dense })
}
