//! Triple-level micro metrics, threshold search and prediction records.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::model::{Model, ModelError};
use crate::numerics::Tensor;

use super::TrainError;

/// Pair probabilities of one document; `probs` has one row per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DocScores {
    pub title: String,
    pub pairs: Vec<(usize, usize)>,
    pub probs: Tensor,
}

/// `(document index, head, tail, relation)`.
pub type Triple = (usize, usize, usize, usize);

/// Cross-document fact identity: `(head name, tail name, relation)`.
pub type FactSet = HashSet<(String, String, usize)>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn from_sets(gold: &BTreeSet<Triple>, pred: &BTreeSet<Triple>) -> Self {
        let tp = pred.intersection(gold).count();
        Self {
            tp,
            fp: pred.len() - tp,
            fn_: gold.len() - tp,
        }
    }

    /// Zero when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Zero when there is no gold.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ign_f1: Option<f64>,
    pub intra_f1: f64,
    pub inter_f1: f64,
    pub all: Counts,
    pub ign: Option<Counts>,
    pub intra: Counts,
    pub inter: Counts,
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |x: f64| format!("{:6.2}", 100.0 * x);
        writeln!(f, "threshold  {:.2}", self.threshold)?;
        writeln!(f, "metric     value     tp     fp     fn")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, v: f64, c: &Counts| {
            writeln!(f, "{name:<9} {} {:>6} {:>6} {:>6}", pct(v), c.tp, c.fp, c.fn_)
        };
        writeln!(f, "P         {}", pct(self.precision))?;
        writeln!(f, "R         {}", pct(self.recall))?;
        row(f, "F1", self.f1, &self.all)?;
        if let (Some(v), Some(c)) = (self.ign_f1, &self.ign) {
            row(f, "Ign F1", v, c)?;
        }
        row(f, "Intra F1", self.intra_f1, &self.intra)?;
        row(f, "Inter F1", self.inter_f1, &self.inter)
    }
}

/// One emitted triple, in the field layout of the usual submission format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub title: String,
    pub h_idx: usize,
    pub t_idx: usize,
    pub r: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub threshold: f64,
    pub predictions: Vec<Prediction>,
}

impl PredictionSet {
    /// One JSON object per line.
    pub fn to_ndjson(&self) -> String {
        self.predictions
            .iter()
            .map(|p| serde_json::to_string(p).expect("prediction serializes") + "\n")
            .collect()
    }
}

/// Scores every document in parallel; documents with fewer than two
/// entities get an empty score table. Output order follows the corpus.
pub fn score_corpus(model: &Model, corpus: &Corpus) -> Result<Vec<DocScores>, ModelError> {
    corpus
        .documents
        .par_iter()
        .map(|doc| {
            if doc.entities.len() < 2 {
                return Ok(DocScores {
                    title: doc.title.clone(),
                    pairs: Vec::new(),
                    probs: Tensor::zeros(0, model.config.n_relations),
                });
            }
            let (pairs, probs) = model.score(doc)?;
            Ok(DocScores {
                title: doc.title.clone(),
                pairs,
                probs,
            })
        })
        .collect()
}

fn gold_triples(corpus: &Corpus) -> BTreeSet<Triple> {
    corpus
        .documents
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| doc.facts.iter().map(move |f| (d, f.head, f.tail, f.relation)))
        .collect()
}

fn predicted_triples(scores: &[DocScores], threshold: f64) -> BTreeSet<Triple> {
    let mut out = BTreeSet::new();
    for (d, s) in scores.iter().enumerate() {
        let r = s.probs.cols();
        for (i, &(h, t)) in s.pairs.iter().enumerate() {
            for rel in 0..r {
                if s.probs.get(i, rel) >= threshold {
                    out.insert((d, h, t, rel));
                }
            }
        }
    }
    out
}

/// `(head name, tail name, relation)` of every fact in the corpus.
pub fn fact_names(corpus: &Corpus) -> FactSet {
    corpus
        .documents
        .iter()
        .flat_map(|doc| {
            doc.facts
                .iter()
                .map(|f| (doc.entities[f.head].name().to_string(), doc.entities[f.tail].name().to_string(), f.relation))
        })
        .collect()
}

fn is_shared(doc: &Document, t: &Triple, train: &FactSet) -> bool {
    train.contains(&(doc.entities[t.1].name().to_string(), doc.entities[t.2].name().to_string(), t.3))
}

/// Metrics over hand-given gold and predicted triples of `corpus`.
pub fn metrics_from_triples(
    corpus: &Corpus,
    gold: &BTreeSet<Triple>,
    pred: &BTreeSet<Triple>,
    threshold: f64,
    train_facts: Option<&FactSet>,
) -> Metrics {
    let intra = |t: &&Triple| corpus.documents[t.0].shares_sentence(t.1, t.2);
    let split = |set: &BTreeSet<Triple>, want_intra: bool| -> BTreeSet<Triple> {
        set.iter().filter(|t| intra(t) == want_intra).copied().collect()
    };
    let all = Counts::from_sets(gold, pred);
    let intra_c = Counts::from_sets(&split(gold, true), &split(pred, true));
    let inter_c = Counts::from_sets(&split(gold, false), &split(pred, false));
    let ign = train_facts.map(|train| {
        let keep = |set: &BTreeSet<Triple>| -> BTreeSet<Triple> {
            set.iter()
                .filter(|t| !is_shared(&corpus.documents[t.0], t, train))
                .copied()
                .collect()
        };
        Counts::from_sets(&keep(gold), &keep(pred))
    });
    Metrics {
        threshold,
        precision: all.precision(),
        recall: all.recall(),
        f1: all.f1(),
        ign_f1: ign.map(|c| c.f1()),
        intra_f1: intra_c.f1(),
        inter_f1: inter_c.f1(),
        all,
        ign,
        intra: intra_c,
        inter: inter_c,
    }
}

/// Thresholds scores at `threshold` (inclusive) and scores the result
/// against the corpus facts. Ign F1 needs `train_facts`.
pub fn evaluate_scores(
    corpus: &Corpus,
    scores: &[DocScores],
    threshold: f64,
    train_facts: Option<&FactSet>,
    want_ign: bool,
) -> Result<(Metrics, PredictionSet), TrainError> {
    if want_ign && train_facts.is_none() {
        return Err(TrainError::MissingTrainFacts);
    }
    if scores.len() != corpus.documents.len() {
        return Err(TrainError::Config("score table does not match corpus".into()));
    }
    let gold = gold_triples(corpus);
    let pred = predicted_triples(scores, threshold);
    let metrics = metrics_from_triples(corpus, &gold, &pred, threshold, train_facts);
    Ok((metrics, prediction_set(corpus, scores, threshold)))
}

/// Emitted triples in document, pair and relation order.
pub fn prediction_set(corpus: &Corpus, scores: &[DocScores], threshold: f64) -> PredictionSet {
    let mut predictions = Vec::new();
    for s in scores {
        for (i, &(h, t)) in s.pairs.iter().enumerate() {
            for rel in 0..s.probs.cols() {
                let score = s.probs.get(i, rel);
                if score >= threshold {
                    predictions.push(Prediction {
                        title: s.title.clone(),
                        h_idx: h,
                        t_idx: t,
                        r: corpus
                            .schema
                            .names
                            .get(rel)
                            .cloned()
                            .unwrap_or_else(|| rel.to_string()),
                        score,
                    });
                }
            }
        }
    }
    PredictionSet {
        threshold,
        predictions,
    }
}

/// Model-level evaluation: scores the corpus and thresholds it.
pub fn evaluate(
    model: &Model,
    corpus: &Corpus,
    threshold: f64,
    train_facts: Option<&FactSet>,
    want_ign: bool,
) -> Result<(Metrics, PredictionSet), TrainError> {
    check_schema(model, corpus)?;
    let scores = score_corpus(model, corpus)?;
    evaluate_scores(corpus, &scores, threshold, train_facts, want_ign)
}

pub(crate) fn check_schema(model: &Model, corpus: &Corpus) -> Result<(), TrainError> {
    if model.relations != corpus.schema.names {
        return Err(TrainError::SchemaMismatch);
    }
    Ok(())
}

/// Grid `k * step` for `k = 1 .. round(1 / step) - 1`, computed as `k / n`.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>, TrainError> {
    if !(step > 0.0 && step < 1.0) {
        return Err(TrainError::Config(format!("threshold step must be in (0, 1), got {step}")));
    }
    let n = (1.0 / step).round() as usize;
    if n < 2 {
        return Err(TrainError::Config(format!("threshold step {step} leaves an empty grid")));
    }
    Ok((1..n).map(|k| k as f64 / n as f64).collect())
}

/// Best micro-F1 threshold for `(score, is_gold)` candidates; `total_gold`
/// counts every gold triple, scored or not. Ties go to the smallest threshold.
pub fn tune_threshold_on(candidates: &[(f64, bool)], total_gold: usize, step: f64) -> Result<(f64, f64), TrainError> {
    if candidates.is_empty() {
        return Err(TrainError::EmptyScores);
    }
    let grid = threshold_grid(step)?;
    let mut sorted: Vec<(f64, bool)> = candidates.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    // tp_prefix[i] = gold among the i highest scores.
    let mut tp_prefix = Vec::with_capacity(sorted.len() + 1);
    tp_prefix.push(0usize);
    for &(_, g) in &sorted {
        tp_prefix.push(tp_prefix.last().unwrap() + usize::from(g));
    }
    let mut best = (grid[0], -1.0);
    for &t in &grid {
        let predicted = sorted.partition_point(|&(s, _)| s >= t);
        let tp = tp_prefix[predicted];
        let c = Counts {
            tp,
            fp: predicted - tp,
            fn_: total_gold - tp,
        };
        let f1 = c.f1();
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    Ok(best)
}

/// Threshold maximising micro-F1 of `scores` against the corpus facts,
/// with the F1 it reaches.
pub fn tune_threshold(corpus: &Corpus, scores: &[DocScores], step: f64) -> Result<(f64, f64), TrainError> {
    let gold = gold_triples(corpus);
    let mut candidates = Vec::new();
    for (d, s) in scores.iter().enumerate() {
        for (i, &(h, t)) in s.pairs.iter().enumerate() {
            for rel in 0..s.probs.cols() {
                candidates.push((s.probs.get(i, rel), gold.contains(&(d, h, t, rel))));
            }
        }
    }
    tune_threshold_on(&candidates, gold.len(), step)
}
