//! The `gracr` command line. Every subcommand reads a JSON run config (all
//! fields optional except where noted) and lets flags override it.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error,
//! 3 verification failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    corpus_stats, generate_synthetic, load_docred, load_schema, tiny_document, Corpus, CorpusError, Document,
    GeneratorConfig, RelationSchema, Split,
};
use crate::encoder::{build_vocab, EncoderError};
use crate::graphs::{explain_pair, export_graphs, GraphError};
use crate::model::{document_loss, forward_document, Model, ModelCheckpoint, ModelConfig, ModelError};
use crate::numerics::{finite_difference_check, GradCheckOptions, NumericsError, ParamRegistry, Tape, Var};
use crate::training::{
    ablation_run, evaluate_scores, fact_names, log_to_jsonl, parse_override, score_corpus, standard_variants,
    train_with, tune_threshold, AblationVariant, TrainConfig, TrainError,
};

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidArgument(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::InvalidDocument(_) => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::UnknownFlag(_) | TrainError::MissingTrainFacts => {
                CliError::Usage(e.to_string())
            }
            TrainError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gracr", version, about = "Graph-based document-level relation extraction")]
pub struct Cli {
    /// Worker threads for per-document work (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a DocRED-format file into a canonical corpus file.
    Ingest(IngestArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Write both graphs of every document as JSON.
    BuildGraphs(GraphArgs),
    /// List the reasoning paths between two entities.
    Explain(ExplainArgs),
    /// Train a model and keep the best dev checkpoint.
    Train(TrainArgs),
    /// Score a corpus with a checkpoint and report metrics.
    Evaluate(EvalArgs),
    /// Write predictions only.
    Predict(PredictArgs),
    /// Train and compare the ablated variants.
    Ablate(AblateArgs),
    /// Compare analytic and finite-difference gradients of the full loss.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// DocRED-format JSON array of documents.
    #[arg(long)]
    pub input: PathBuf,
    /// Relation schema: `rel_info.json` object or `name<TAB>description` lines.
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: Split,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Canonical corpus file, or a DocRED file when `--schema` is given.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    pub split: Split,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub docs: Option<usize>,
    #[arg(long)]
    pub relations: Option<usize>,
    #[arg(long)]
    pub inter_fraction: Option<f64>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Corpus file; the built-in demo document when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Document title or index.
    #[arg(long, default_value = "0")]
    pub doc: String,
    #[arg(long)]
    pub head: usize,
    #[arg(long)]
    pub tail: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Model flag override, `name=true|false`; repeatable.
    #[arg(long = "set")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Training corpus; enables Ign F1.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Search the threshold on this corpus instead.
    #[arg(long)]
    pub tune: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Extra variant `label:flag=value,flag=value`; repeatable.
    #[arg(long = "variant")]
    pub variants: Vec<String>,
    /// Only the named standard variants (by label); repeatable.
    #[arg(long = "only")]
    pub only: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus to take the document from; the built-in demo document when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "0")]
    pub doc: String,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Coordinates sampled per parameter; 0 checks all of them.
    #[arg(long, default_value_t = 24)]
    pub coords: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

/// Everything a run needs. `seed`, when present, seeds the model, the
/// training order and the generator alike.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub generator: GeneratorConfig,
    pub synth_docs: Option<usize>,
    pub synth_relations: Option<usize>,
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))
            }
        }
    }

    /// SHA-256 of the resolved config. The output directory is left out so
    /// the same experiment written to two places hashes the same.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.paths.output_dir = None;
        let json = serde_json::to_string(&keyed).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn require_seed(&mut self, flag: Option<u64>) -> Result<u64, CliError> {
        if let Some(s) = flag {
            self.seed = Some(s);
        }
        let seed = self
            .seed
            .ok_or_else(|| CliError::Usage("a seed is required (config `seed` or --seed)".into()))?;
        self.model.seed = seed;
        self.train.seed = seed;
        Ok(seed)
    }
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // A second initialisation (e.g. from tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Stats(a) => stats(a),
        Command::Synth(a) => synth(a),
        Command::BuildGraphs(a) => build_graphs(a),
        Command::Explain(a) => explain(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Ablate(a) => ablate(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

/// Writes through a temporary sibling and renames, so a failed run never
/// leaves a half-written file behind.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    Ok(Corpus::read(path)?)
}

fn read_checkpoint(path: &Path) -> Result<Model, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(Model::from_checkpoint(ModelCheckpoint::from_json(&text)?)?)
}

fn pick_document<'a>(corpus: &'a Corpus, key: &str) -> Result<&'a Document, CliError> {
    if let Ok(i) = key.parse::<usize>() {
        if let Some(d) = corpus.documents.get(i) {
            return Ok(d);
        }
    }
    corpus
        .documents
        .iter()
        .find(|d| d.title == key)
        .ok_or_else(|| CliError::Usage(format!("no document `{key}`")))
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let schema = load_schema(&a.schema)?;
    let corpus = load_docred(&a.input, &schema, a.split)?;
    write_atomic(&a.output, &corpus.to_json())?;
    println!("{} documents -> {}", corpus.documents.len(), a.output.display());
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let corpus = match &a.schema {
        Some(s) => load_docred(&a.corpus, &load_schema(s)?, a.split)?,
        None => read_corpus(&a.corpus)?,
    };
    let report = corpus_stats(&corpus);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{report}");
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    let seed = cfg.require_seed(a.seed)?;
    if let Some(f) = a.inter_fraction {
        cfg.generator.inter_fraction = f;
    }
    let docs = a.docs.or(cfg.synth_docs).unwrap_or(100);
    let relations = a.relations.or(cfg.synth_relations).unwrap_or(4);
    let corpus = generate_synthetic(seed, docs, &RelationSchema::numbered(relations), &cfg.generator)?;
    write_atomic(&a.output, &corpus.to_json())?;
    println!("{docs} synthetic documents (seed {seed}) -> {}", a.output.display());
    Ok(())
}

fn build_graphs(a: GraphArgs) -> Result<(), CliError> {
    let corpus = read_corpus(&a.corpus)?;
    let graphs = corpus
        .documents
        .iter()
        .map(export_graphs)
        .collect::<Result<Vec<_>, _>>()?;
    write_atomic(&a.output, &serde_json::to_string(&graphs).expect("graphs serialize"))?;
    println!("graphs for {} documents -> {}", graphs.len(), a.output.display());
    Ok(())
}

fn explain(a: ExplainArgs) -> Result<(), CliError> {
    let corpus;
    let demo = tiny_document();
    let doc = match &a.corpus {
        Some(p) => {
            corpus = read_corpus(p)?;
            pick_document(&corpus, &a.doc)?
        }
        None => &demo,
    };
    let ex = explain_pair(doc, a.head, a.tail)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&ex).expect("explanation serializes"));
    } else {
        print!("{}", ex.render(doc));
    }
    Ok(())
}

struct Prepared {
    cfg: RunConfig,
    train: Corpus,
    dev: Corpus,
    out: PathBuf,
}

fn prepare(
    config: Option<&Path>,
    train: Option<PathBuf>,
    dev: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    epochs: Option<usize>,
) -> Result<Prepared, CliError> {
    let mut cfg = RunConfig::load(config)?;
    cfg.require_seed(seed)?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    cfg.paths.train = train.or(cfg.paths.train);
    cfg.paths.dev = dev.or(cfg.paths.dev);
    cfg.paths.output_dir = out.or(cfg.paths.output_dir);
    let train_path = cfg.paths.train.clone().ok_or_else(|| CliError::Usage("no training corpus given".into()))?;
    let dev_path = cfg.paths.dev.clone().ok_or_else(|| CliError::Usage("no dev corpus given".into()))?;
    let out = cfg.paths.output_dir.clone().ok_or_else(|| CliError::Usage("no output directory given".into()))?;
    cfg.train.validate()?;
    let train = read_corpus(&train_path)?;
    let dev = read_corpus(&dev_path)?;
    cfg.model.n_relations = train.schema.count();
    cfg.model.validate()?;
    Ok(Prepared { cfg, train, dev, out })
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let mut p = prepare(a.config.as_deref(), a.train, a.dev, a.out, a.seed, a.epochs)?;
    let overrides = a
        .overrides
        .iter()
        .map(|o| parse_override(o))
        .collect::<Result<Vec<_>, _>>()?;
    p.cfg.model = crate::training::apply_overrides(&p.cfg.model, &overrides)?;
    let outcome = train_with(&p.train, &p.dev, &p.cfg.model, &p.cfg.train, |e| {
        eprintln!(
            "epoch {:>4}  loss {:>10.4}  dev F1 {:.4} @ {:.2}{}",
            e.epoch,
            e.train_loss,
            e.dev_f1,
            e.dev_threshold,
            if e.improved { "  *" } else { "" }
        );
    })?;
    let best = &outcome.log[outcome.best_epoch - 1];
    let summary = serde_json::json!({
        "config_hash": p.cfg.hash(),
        "model_config_hash": p.cfg.model.hash(),
        "best_epoch": outcome.best_epoch,
        "dev_f1": best.dev_f1,
        "dev_threshold": best.dev_threshold,
    });
    write_atomic(&p.out.join("checkpoint.json"), &outcome.model.to_checkpoint().to_json())?;
    write_atomic(&p.out.join("train_log.jsonl"), &log_to_jsonl(&outcome.log))?;
    write_atomic(&p.out.join("vocab.tsv"), &outcome.model.vocab.to_tsv())?;
    write_atomic(&p.out.join("config.json"), &serde_json::to_string_pretty(&p.cfg).expect("config serializes"))?;
    write_atomic(&p.out.join("summary.json"), &serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    println!(
        "best epoch {} (dev F1 {:.4} at threshold {:.2}) -> {}",
        outcome.best_epoch,
        best.dev_f1,
        best.dev_threshold,
        p.out.display()
    );
    Ok(())
}

fn evaluate_cmd(a: EvalArgs) -> Result<(), CliError> {
    let model = read_checkpoint(&a.checkpoint)?;
    let corpus = read_corpus(&a.corpus)?;
    if model.relations != corpus.schema.names {
        return Err(CliError::Data("checkpoint relations do not match the corpus schema".into()));
    }
    let train_facts = match &a.train {
        Some(p) => Some(fact_names(&read_corpus(p)?)),
        None => None,
    };
    let scores = score_corpus(&model, &corpus)?;
    let threshold = if a.tune {
        tune_threshold(&corpus, &scores, 0.01)?.0
    } else {
        a.threshold
    };
    let (metrics, predictions) = evaluate_scores(&corpus, &scores, threshold, train_facts.as_ref(), train_facts.is_some())?;
    let report = serde_json::json!({
        "config_hash": model.config.hash(),
        "metrics": metrics,
    });
    write_atomic(&a.out.join("metrics.json"), &serde_json::to_string_pretty(&report).expect("metrics serialize"))?;
    write_atomic(&a.out.join("metrics.txt"), &metrics.to_string())?;
    write_atomic(&a.out.join("predictions.jsonl"), &predictions.to_ndjson())?;
    print!("{metrics}");
    Ok(())
}

fn predict(a: PredictArgs) -> Result<(), CliError> {
    let model = read_checkpoint(&a.checkpoint)?;
    let corpus = read_corpus(&a.corpus)?;
    if model.relations != corpus.schema.names {
        return Err(CliError::Data("checkpoint relations do not match the corpus schema".into()));
    }
    let scores = score_corpus(&model, &corpus)?;
    let set = crate::training::metrics::prediction_set(&corpus, &scores, a.threshold);
    write_atomic(&a.output, &set.to_ndjson())?;
    println!("{} predictions -> {}", set.predictions.len(), a.output.display());
    Ok(())
}

/// `label:flag=value,flag=value`
fn parse_variant(text: &str) -> Result<AblationVariant, CliError> {
    let (label, flags) = text
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("expected label:flag=value,..., got `{text}`")))?;
    let overrides = flags
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse_override)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AblationVariant {
        label: label.trim().to_string(),
        overrides,
    })
}

fn ablate(a: AblateArgs) -> Result<(), CliError> {
    let p = prepare(a.config.as_deref(), a.train, a.dev, a.out, a.seed, a.epochs)?;
    let mut variants = standard_variants();
    if !a.only.is_empty() {
        for label in &a.only {
            if !variants.iter().any(|v| &v.label == label) {
                return Err(CliError::Usage(format!("unknown variant `{label}`")));
            }
        }
        variants.retain(|v| a.only.contains(&v.label));
    }
    for v in &a.variants {
        variants.push(parse_variant(v)?);
    }
    let table = ablation_run(&p.train, &p.dev, &p.cfg.model, &p.cfg.train, &variants)?;
    let report = serde_json::json!({ "config_hash": p.cfg.hash(), "rows": table.rows });
    write_atomic(&p.out.join("ablation.json"), &serde_json::to_string_pretty(&report).expect("table serializes"))?;
    write_atomic(&p.out.join("ablation.txt"), &table.to_string())?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct GradcheckOutput<'a> {
    config_hash: String,
    document: &'a str,
    tolerance: f64,
    report: crate::numerics::GradCheckReport,
}

fn gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let corpus = match &a.corpus {
        Some(p) => read_corpus(p)?,
        None => Corpus {
            documents: vec![tiny_document()],
            schema: RelationSchema::numbered(2),
            split: Split::Train,
        },
    };
    let doc = pick_document(&corpus, &a.doc)?.clone();
    let mut model_cfg = cfg.model.clone();
    model_cfg.n_relations = corpus.schema.count();
    let vocab = build_vocab(&corpus, model_cfg.min_count)?;
    let mut model = Model::new(model_cfg, vocab, corpus.schema.names.clone())?;
    let options = GradCheckOptions {
        step: a.step,
        max_coords_per_param: (a.coords > 0).then_some(a.coords),
        seed: a.seed,
    };
    if !(a.step > 0.0) {
        return Err(CliError::Usage(format!("--step must be positive, got {}", a.step)));
    }
    let (config, vocab) = (model.config.clone(), model.vocab.clone());
    let report = finite_difference_check(
        |tape: &mut Tape, reg: &ParamRegistry| -> Result<Var, ModelError> {
            let f = forward_document(tape, &doc, reg, &config, &vocab)?;
            document_loss(tape, &doc, &f, config.n_relations, None)
        },
        &mut model.params,
        options,
    )?;
    for p in &report.per_param {
        println!(
            "{:<22} {:>5} coords  {:>3} kinks skipped  max rel err {:.3e}",
            p.name, p.checked, p.kinks_skipped, p.max_rel_error
        );
    }
    println!(
        "max relative error {:.3e} ({}[{}]) over {} coordinates ({} skipped at kinks)",
        report.max_rel_error, report.worst_param, report.worst_coord, report.checked, report.kinks_skipped
    );
    let out = GradcheckOutput {
        config_hash: cfg.hash(),
        document: &doc.title,
        tolerance: GRADCHECK_TOLERANCE,
        report,
    };
    if let Some(path) = &a.output {
        write_atomic(path, &serde_json::to_string_pretty(&out).expect("report serializes"))?;
    }
    if out.report.max_rel_error >= GRADCHECK_TOLERANCE {
        return Err(CliError::Verification(format!(
            "gradient check failed: {:.3e} >= {GRADCHECK_TOLERANCE:e}",
            out.report.max_rel_error
        )));
    }
    Ok(())
}
