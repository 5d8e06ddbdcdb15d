//! Seeded mini-batch training with Adam, dev-set model selection, metrics
//! and ablations.

pub mod ablation;
pub mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document};
use crate::encoder::{build_vocab, EncoderError};
use crate::model::{document_loss, gold_matrix, ordered_pairs, Model, ModelConfig, ModelError};
use crate::numerics::{adam_step, AdamConfig, AdamState, NumericsError, ParamGrads, Tape};

pub use ablation::{ablation_run, apply_overrides, parse_override, standard_variants, AblationTable, AblationVariant};
pub use metrics::{
    evaluate, evaluate_scores, fact_names, score_corpus, tune_threshold, DocScores, FactSet, Metrics, Prediction,
    PredictionSet,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("relation schemas of the corpora and model differ")]
    SchemaMismatch,
    #[error("non-finite loss in epoch {epoch} on document `{title}`: {detail}")]
    NonFiniteLoss { epoch: usize, title: String, detail: String },
    #[error("Ign F1 requested without training facts")]
    MissingTrainFacts,
    #[error("no scores to tune a threshold on")]
    EmptyScores,
    #[error("unknown flag `{0}`")]
    UnknownFlag(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<EncoderError> for TrainError {
    fn from(e: EncoderError) -> Self {
        TrainError::Model(e.into())
    }
}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Documents per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Defaults to Adam at lr 2e-3, which with four-document batches
    /// memorised small corpora most reliably across model seeds.
    pub optimizer: AdamConfig,
    /// Scored pairs per document in the loss; all gold pairs are kept first.
    pub max_pairs_per_doc: Option<usize>,
    /// Stop after this many epochs without a dev improvement.
    pub patience: Option<usize>,
    /// Spacing of the dev threshold grid.
    pub threshold_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 4,
            seed: 1,
            optimizer: AdamConfig {
                lr: 2e-3,
                ..AdamConfig::default()
            },
            max_pairs_per_doc: None,
            patience: None,
            threshold_step: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if self.max_pairs_per_doc == Some(0) {
            return Err(TrainError::Config("max_pairs_per_doc must be at least 1".into()));
        }
        metrics::threshold_grid(self.threshold_step)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-document loss over the epoch.
    pub train_loss: f64,
    pub dev_f1: f64,
    pub dev_threshold: f64,
    pub improved: bool,
}

/// One JSON object per epoch.
pub fn log_to_jsonl(log: &[EpochLog]) -> String {
    log.iter()
        .map(|e| serde_json::to_string(e).expect("log serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev F1.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

pub fn train(
    train_corpus: &Corpus,
    dev: &Corpus,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_with(train_corpus, dev, model_config, config, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    train_corpus: &Corpus,
    dev: &Corpus,
    model_config: &ModelConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_corpus.schema != dev.schema {
        return Err(TrainError::SchemaMismatch);
    }
    if model_config.n_relations != train_corpus.schema.count() {
        return Err(TrainError::Config(format!(
            "n_relations is {} but the schema has {} relations",
            model_config.n_relations,
            train_corpus.schema.count()
        )));
    }
    let vocab = build_vocab(train_corpus, model_config.min_count)?;
    let mut model = Model::new(model_config.clone(), vocab, train_corpus.schema.names.clone())?;
    let mut adam = AdamState::new(&model.params, config.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_rel = model_config.n_relations;

    // Documents without pairs add nothing to the loss.
    let trainable: Vec<&Document> = train_corpus
        .documents
        .iter()
        .filter(|d| d.entities.len() >= 2)
        .collect();
    if trainable.is_empty() {
        return Err(TrainError::Config("training corpus has no document with two entities".into()));
    }

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..trainable.len()).collect();
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let rows: Vec<Option<Vec<usize>>> = batch
                .iter()
                .map(|&i| config.max_pairs_per_doc.map(|cap| sample_rows(trainable[i], n_rel, cap, &mut rng)))
                .collect();
            let results: Vec<Result<(f64, ParamGrads), ModelError>> = batch
                .par_iter()
                .zip(rows.par_iter())
                .map(|(&i, rows)| doc_gradient(&model, trainable[i], rows.as_deref()))
                .collect();
            let scale = 1.0 / batch.len() as f64;
            for (&i, r) in batch.iter().zip(results) {
                let (loss, mut grads) = r.map_err(|e| non_finite(e, epoch, trainable[i]))?;
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        title: trainable[i].title.clone(),
                        detail: format!("loss = {loss}"),
                    });
                }
                total_loss += loss;
                grads.scale(scale);
                grads.accumulate_into(&mut model.params);
            }
            adam_step(&mut model.params, &mut adam)?;
        }

        let (dev_threshold, dev_f1) = dev_score(&model, dev, config.threshold_step)?;
        let improved = best.as_ref().is_none_or(|(f, _, _)| dev_f1 > *f);
        if improved {
            best = Some((dev_f1, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        let entry = EpochLog {
            epoch,
            train_loss: total_loss / trainable.len() as f64,
            dev_f1,
            dev_threshold,
            improved,
        };
        on_epoch(&entry);
        log.push(entry);
        if config.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }
    let (_, best_epoch, mut model) = best.expect("at least one epoch ran");
    model.params.clear_grads();
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
    })
}

fn non_finite(e: ModelError, epoch: usize, doc: &Document) -> TrainError {
    match e {
        ModelError::Numerics(NumericsError::NonFinite { op }) => TrainError::NonFiniteLoss {
            epoch,
            title: doc.title.clone(),
            detail: format!("{op} produced a non-finite value"),
        },
        other => other.into(),
    }
}

/// Best dev F1 over the threshold grid; a dev set without pairs scores 0.
fn dev_score(model: &Model, dev: &Corpus, step: f64) -> Result<(f64, f64), TrainError> {
    let scores = score_corpus(model, dev)?;
    match tune_threshold(dev, &scores, step) {
        Ok(r) => Ok(r),
        Err(TrainError::EmptyScores) => Ok((0.5, 0.0)),
        Err(e) => Err(e),
    }
}

fn doc_gradient(model: &Model, doc: &Document, rows: Option<&[usize]>) -> Result<(f64, ParamGrads), ModelError> {
    let mut tape = Tape::new();
    let f = model.forward(&mut tape, doc)?;
    let loss = document_loss(&mut tape, doc, &f, model.config.n_relations, rows)?;
    let value = tape.value(loss).item().unwrap_or(f64::NAN);
    Ok((value, tape.param_gradients(loss)?))
}

/// Pair rows for a capped loss: gold pairs first, then random others, sorted.
fn sample_rows(doc: &Document, n_rel: usize, cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let pairs = ordered_pairs(doc.entities.len());
    let gold = gold_matrix(doc, &pairs, n_rel);
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        (0..pairs.len()).partition(|&i| gold[i * n_rel..(i + 1) * n_rel].iter().any(|&g| g > 0.0));
    pos.shuffle(rng);
    neg.shuffle(rng);
    let mut rows: Vec<usize> = pos.into_iter().chain(neg).take(cap).collect();
    rows.sort_unstable();
    rows
}
