use std::fmt;

use serde::{Deserialize, Serialize};

use super::Corpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub split: String,
    pub documents: usize,
    pub entities: usize,
    pub mentions: usize,
    pub facts: usize,
    pub relation_types: usize,
    /// Rounded to two decimals.
    pub mean_entities_per_doc: f64,
}

pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let documents = corpus.documents.len();
    let entities: usize = corpus.documents.iter().map(|d| d.entities.len()).sum();
    let mean = if documents == 0 {
        0.0
    } else {
        entities as f64 / documents as f64
    };
    StatsReport {
        split: corpus.split.to_string(),
        documents,
        entities,
        mentions: corpus.documents.iter().map(|d| d.mention_count()).sum(),
        facts: corpus.documents.iter().map(|d| d.facts.len()).sum(),
        relation_types: corpus.schema.count(),
        mean_entities_per_doc: (mean * 100.0).round() / 100.0,
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "split                  {}", self.split)?;
        writeln!(f, "documents              {}", self.documents)?;
        writeln!(f, "entities               {}", self.entities)?;
        writeln!(f, "mentions               {}", self.mentions)?;
        writeln!(f, "relation facts         {}", self.facts)?;
        writeln!(f, "relation types         {}", self.relation_types)?;
        writeln!(f, "mean entities per doc  {:.2}", self.mean_entities_per_doc)
    }
}
