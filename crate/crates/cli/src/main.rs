use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use inferkg_cli::commands::{self, EvalInputs, LpSource, ReportInputs, ServeOptions, SynthOptions};
use inferkg_cli::{run_pipeline, Failure, PipelineConfig};

#[derive(Parser)]
#[command(name = "inferkg", version, about = "Build and evaluate inferential knowledge graph completion datasets")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

/// Configuration shared by every subcommand. The file is applied first,
/// then `--set`, then the named flags.
#[derive(Args, Default)]
struct ConfigArgs {
    /// key=value configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override any configuration key
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true, value_name = "FILE")]
    mining_corpus: Option<String>,
    #[arg(long, global = true, value_name = "FILE")]
    dataset_corpus: Option<String>,
    #[arg(long, global = true, value_name = "FILE")]
    reference_corpus: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<String>,
    #[arg(long, global = true, value_name = "FILE")]
    human_labels: Option<String>,
    #[arg(long, global = true)]
    lambda_min: Option<String>,
    /// Confidence threshold of the dense sibling bundle, or `none`
    #[arg(long, global = true)]
    dense_lambda: Option<String>,
    #[arg(long, global = true)]
    exclusivity: Option<String>,
    /// `<seconds>s` or `<count>it`
    #[arg(long = "budget", global = true)]
    mining_budget: Option<String>,
    #[arg(long, global = true)]
    max_rule_hops: Option<String>,
    #[arg(long, global = true)]
    max_extra_hops: Option<String>,
    #[arg(long, global = true)]
    balance_max_share: Option<String>,
    #[arg(long, global = true)]
    parity_tolerance: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Worker threads; 1 gives byte-identical reruns
    #[arg(long, global = true)]
    threads: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, Failure> {
        let mut config = PipelineConfig::default();
        if let Some(path) = &self.config {
            inferkg_cli::require_input(path)?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(anyhow::anyhow!("{}: {e}", path.display())))?;
            config.apply_text(&text).map_err(|e| Failure::usage(anyhow::anyhow!("{}: {e}", path.display())))?;
        }
        for pair in &self.set {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Failure::usage(anyhow::anyhow!("--set expects KEY=VALUE, got `{pair}`")))?;
            config.set(key.trim(), value.trim())?;
        }
        let flags = [
            ("mining_corpus", &self.mining_corpus),
            ("dataset_corpus", &self.dataset_corpus),
            ("reference_corpus", &self.reference_corpus),
            ("output_dir", &self.output_dir),
            ("human_labels", &self.human_labels),
            ("lambda_min", &self.lambda_min),
            ("dense_lambda", &self.dense_lambda),
            ("exclusivity", &self.exclusivity),
            ("mining_budget", &self.mining_budget),
            ("max_rule_hops", &self.max_rule_hops),
            ("max_extra_hops", &self.max_extra_hops),
            ("balance_max_share", &self.balance_max_share),
            ("parity_tolerance", &self.parity_tolerance),
            ("seed", &self.seed),
            ("threads", &self.threads),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and filter a triple file
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        top_entities: Option<usize>,
        #[arg(long)]
        top_relations: Option<usize>,
    },
    /// Mine Horn rules from the mining corpus
    Mine {
        #[arg(long)]
        out: PathBuf,
    },
    /// Divide the dataset corpus into train and inferable candidates
    Split {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lengthen candidate paths by rule substitution
    Extend {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cap over-represented hop, relation and pattern groups
    Balance {
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate corruption negatives for the labeled candidates
    Negsample {
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve unresolved candidates for two-step human labeling
    AnnotateServe {
        /// Directory holding the label log
        #[arg(long)]
        store: PathBuf,
        /// Path metadata file whose candidates are queued
        #[arg(long)]
        enqueue: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, default_value_t = 900)]
        lease_secs: u64,
        /// Accept new answers for finalized tasks
        #[arg(long)]
        relabel: bool,
    },
    /// Label candidates and write the dataset bundle
    Assemble {
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        negatives: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-world triple classification
    EvalTc {
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Open-world triple classification with two thresholds
    EvalTcOpen {
        #[command(flatten)]
        eval: EvalArgs,
        /// Cut points per side for the sensitivity sweep
        #[arg(long, default_value_t = 50)]
        grid: usize,
    },
    /// Filtered link prediction from a score table or a rule file
    EvalLp {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, conflicts_with = "rules", required_unless_present = "rules")]
        scores: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Also filter valid and test positives
        #[arg(long)]
        filter_all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dataset statistics and stratified breakdowns
    Report {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        lp_scores: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every construction stage into output_dir
    Pipeline,
    /// Generate the synthetic kinship corpus and a matching config
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        families: usize,
        #[arg(long, default_value_t = 0.95)]
        mother_rate: f64,
        #[arg(long, default_value_t = 0.1)]
        hidden_fraction: f64,
    },
    /// Agreement between two label exports
    Agreement { a: PathBuf, b: PathBuf },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// head, relation, tail, score per line
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value = "model")]
    model: String,
    #[arg(long)]
    out: PathBuf,
}

impl EvalArgs {
    fn inputs(&self) -> EvalInputs<'_> {
        EvalInputs { bundle: &self.bundle, scores: &self.scores, model: &self.model, out: &self.out }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = cli.config.resolve()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build_global()
        .map_err(|e| Failure::usage(anyhow::anyhow!("cannot start {} threads: {e}", config.threads)))?;
    match cli.command {
        Command::Ingest { input, out, top_entities, top_relations } => {
            commands::ingest(&config, &input, &out, top_entities, top_relations)
        }
        Command::Mine { out } => commands::mine(&config, &out),
        Command::Split { rules, out } => commands::split(&config, &rules, &out),
        Command::Extend { rules, split, out } => commands::extend(&config, &rules, &split, &out),
        Command::Balance { split, out } => commands::balance_split(&config, &split, &out),
        Command::Negsample { split, out } => commands::negsample(&config, &split, &out),
        Command::AnnotateServe { store, enqueue, bind, lease_secs, relabel } => commands::annotate_serve(
            &config,
            &ServeOptions { store: &store, enqueue: enqueue.as_deref(), bind: &bind, lease_secs, relabel },
        ),
        Command::Assemble { split, negatives, out } => {
            commands::assemble_bundle(&config, &split, negatives.as_deref(), &out)
        }
        Command::EvalTc { eval } => commands::eval_tc(&config, &eval.inputs()).map(|r| print!("{r}")),
        Command::EvalTcOpen { eval, grid } => {
            commands::eval_tc_open(&config, &eval.inputs(), grid).map(|r| print!("{r}"))
        }
        Command::EvalLp { bundle, scores, rules, filter_all, out } => {
            let source = match (&scores, &rules) {
                (Some(s), _) => LpSource::Scores(s),
                (None, Some(r)) => LpSource::Rules(r),
                (None, None) => unreachable!("clap requires one source"),
            };
            commands::eval_lp(&config, &bundle, &source, filter_all, &out).map(|r| print!("{r}"))
        }
        Command::Report { bundle, scores, lp_scores, rules, out } => commands::report(
            &config,
            &ReportInputs {
                bundle: &bundle,
                scores: scores.as_deref(),
                lp_scores: lp_scores.as_deref(),
                rules: rules.as_deref(),
                out: &out,
            },
        )
        .map(|r| print!("{r}")),
        Command::Pipeline => run_pipeline(&config).map(|summary| {
            for (k, v) in &summary.counts {
                println!("{k}={v}");
            }
        }),
        Command::Synth { out, families, mother_rate, hidden_fraction } => {
            commands::synth(&config, &SynthOptions { families, mother_rate, hidden_fraction }, &out)
        }
        Command::Agreement { a, b } => commands::label_agreement(&a, &b).map(|f| println!("agreement={f}")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
