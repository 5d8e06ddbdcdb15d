//! Module and edge-type ablations, trained and scored side by side.

use std::fmt;

use serde::Serialize;

use crate::corpus::Corpus;
use crate::model::ModelConfig;

use super::metrics::{fact_names, score_corpus, tune_threshold, evaluate_scores, Metrics};
use super::{train, TrainConfig, TrainError};

pub const FLAGS: [&str; 6] = [
    "use_aggregation",
    "use_reasoning",
    "use_intra_edges",
    "use_logic_edges",
    "per_entity_softmax",
    "context_includes_target",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AblationVariant {
    pub label: String,
    pub overrides: Vec<(String, bool)>,
}

impl AblationVariant {
    fn new(label: &str, overrides: &[(&str, bool)]) -> Self {
        Self {
            label: label.into(),
            overrides: overrides.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

/// The full model and its five reductions, in the usual reporting order.
pub fn standard_variants() -> Vec<AblationVariant> {
    vec![
        AblationVariant::new("GRACR", &[]),
        AblationVariant::new("w/o both module", &[("use_aggregation", false), ("use_reasoning", false)]),
        AblationVariant::new("w/o reasoning module", &[("use_reasoning", false)]),
        AblationVariant::new("w/o aggregation module", &[("use_aggregation", false)]),
        AblationVariant::new("w/o reasoning edge", &[("use_logic_edges", false)]),
        AblationVariant::new("w/o intra-sentence edge", &[("use_intra_edges", false)]),
    ]
}

/// Parses `flag=true|false`.
pub fn parse_override(text: &str) -> Result<(String, bool), TrainError> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| TrainError::Config(format!("expected flag=value, got `{text}`")))?;
    let v = match v.trim() {
        "true" => true,
        "false" => false,
        other => return Err(TrainError::Config(format!("flag value must be true or false, got `{other}`"))),
    };
    let k = k.trim();
    if !FLAGS.contains(&k) {
        return Err(TrainError::UnknownFlag(k.into()));
    }
    Ok((k.into(), v))
}

pub fn apply_overrides(config: &ModelConfig, overrides: &[(String, bool)]) -> Result<ModelConfig, TrainError> {
    let mut c = config.clone();
    for (k, v) in overrides {
        let slot = match k.as_str() {
            "use_aggregation" => &mut c.use_aggregation,
            "use_reasoning" => &mut c.use_reasoning,
            "use_intra_edges" => &mut c.use_intra_edges,
            "use_logic_edges" => &mut c.use_logic_edges,
            "per_entity_softmax" => &mut c.per_entity_softmax,
            "context_includes_target" => &mut c.context_includes_target,
            other => return Err(TrainError::UnknownFlag(other.into())),
        };
        *slot = *v;
    }
    Ok(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<26} {:>7} {:>7} {:>7} {:>7} {:>6}",
            "Model", "Ign F1", "F1", "Intra", "Inter", "thr"
        )?;
        for r in &self.rows {
            let m = &r.metrics;
            writeln!(
                f,
                "{:<26} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>6.2}",
                r.label,
                100.0 * m.ign_f1.unwrap_or(f64::NAN),
                100.0 * m.f1,
                100.0 * m.intra_f1,
                100.0 * m.inter_f1,
                m.threshold
            )?;
        }
        Ok(())
    }
}

/// Trains each variant on `train`, tunes its threshold on `dev`, and reports
/// dev metrics at that threshold. Ign F1 is taken against the train facts.
pub fn ablation_run(
    train_corpus: &Corpus,
    dev: &Corpus,
    base: &ModelConfig,
    train_config: &TrainConfig,
    variants: &[AblationVariant],
) -> Result<AblationTable, TrainError> {
    let train_facts = fact_names(train_corpus);
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let config = apply_overrides(base, &v.overrides)?;
        let outcome = train(train_corpus, dev, &config, train_config)?;
        let scores = score_corpus(&outcome.model, dev)?;
        let (threshold, _) = tune_threshold(dev, &scores, train_config.threshold_step)?;
        let (metrics, _) = evaluate_scores(dev, &scores, threshold, Some(&train_facts), true)?;
        rows.push(AblationRow {
            label: v.label.clone(),
            metrics,
        });
    }
    Ok(AblationTable { rows })
}
