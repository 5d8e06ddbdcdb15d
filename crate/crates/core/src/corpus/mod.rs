//! Annotated documents: data model, DocRED ingestion, validation, statistics
//! and a seeded synthetic generator.

mod docred;
mod stats;
mod synth;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use docred::{load_docred, load_schema, parse_docred, to_docred_json};
pub use stats::{corpus_stats, StatsReport};
pub use synth::{generate_synthetic, GeneratorConfig};
pub use validate::{validate_document, Violation};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("document {doc}: field `{field}`: {reason}")]
    Malformed {
        doc: usize,
        field: String,
        reason: String,
    },
    #[error("document {doc}: unknown relation `{name}`")]
    UnknownRelation { doc: usize, name: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("document {doc} ({title}) is invalid: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid {
        doc: usize,
        title: String,
        violations: Vec<Violation>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub sentence_index: usize,
    pub token_start: usize,
    /// Exclusive.
    pub token_end: usize,
    pub surface: String,
}

impl Mention {
    pub fn span(&self) -> (usize, usize, usize) {
        (self.sentence_index, self.token_start, self.token_end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_id: usize,
    pub mentions: Vec<Mention>,
}

impl Entity {
    /// Surface of the first mention; the cross-document identity of an entity.
    pub fn name(&self) -> &str {
        self.mentions.first().map_or("", |m| m.surface.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationFact {
    pub head: usize,
    pub tail: usize,
    pub relation: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub title: String,
    pub sentences: Vec<Vec<String>>,
    pub entities: Vec<Entity>,
    pub facts: Vec<RelationFact>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Document position of the first token of each sentence.
    pub fn sentence_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.sentences.len());
        let mut acc = 0;
        for s in &self.sentences {
            offsets.push(acc);
            acc += s.len();
        }
        offsets
    }

    /// Tokens of all sentences concatenated in order.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    pub fn mention_count(&self) -> usize {
        self.entities.iter().map(|e| e.mentions.len()).sum()
    }

    /// Document position of the earliest mention start of `entity`.
    pub fn first_mention_position(&self, entity: usize) -> usize {
        let offsets = self.sentence_offsets();
        self.entities[entity]
            .mentions
            .iter()
            .map(|m| offsets[m.sentence_index] + m.token_start)
            .min()
            .unwrap_or(0)
    }

    pub fn entity_sentences(&self, entity: usize) -> BTreeSet<usize> {
        self.entities[entity]
            .mentions
            .iter()
            .map(|m| m.sentence_index)
            .collect()
    }

    /// True when the two entities have mentions in a common sentence.
    pub fn shares_sentence(&self, a: usize, b: usize) -> bool {
        let sa = self.entity_sentences(a);
        self.entities[b]
            .mentions
            .iter()
            .any(|m| sa.contains(&m.sentence_index))
    }

    /// Renumbers entities so that new entity `i` is old entity `order[i]`.
    /// Facts are remapped accordingly.
    pub fn reorder_entities(&self, order: &[usize]) -> Document {
        assert_eq!(order.len(), self.entities.len());
        let mut new_index = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let entities = order
            .iter()
            .enumerate()
            .map(|(new, &old)| Entity {
                entity_id: new,
                mentions: self.entities[old].mentions.clone(),
            })
            .collect();
        let facts = self
            .facts
            .iter()
            .map(|f| RelationFact {
                head: new_index[f.head],
                tail: new_index[f.tail],
                relation: f.relation,
                evidence: f.evidence.clone(),
            })
            .collect();
        Document {
            title: self.title.clone(),
            sentences: self.sentences.clone(),
            entities,
            facts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    /// Relation keys as they appear in data files (e.g. `P17`).
    pub names: Vec<String>,
    /// Human-readable labels, parallel to `names`; empty strings when unknown.
    #[serde(default)]
    pub descriptions: Vec<String>,
}

impl RelationSchema {
    pub fn new(names: Vec<String>) -> Result<Self, CorpusError> {
        let descriptions = vec![String::new(); names.len()];
        Self::with_descriptions(names, descriptions)
    }

    pub fn with_descriptions(names: Vec<String>, descriptions: Vec<String>) -> Result<Self, CorpusError> {
        if names.len() != descriptions.len() {
            return Err(CorpusError::Schema("names and descriptions differ in length".into()));
        }
        let unique: BTreeSet<_> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(CorpusError::Schema("relation names must be unique".into()));
        }
        Ok(Self {
            names,
            descriptions,
        })
    }

    /// `R0 .. R{n-1}`.
    pub fn numbered(count: usize) -> Self {
        Self::new((0..count).map(|i| format!("R{i}")).collect()).expect("names are unique")
    }

    pub fn count(&self) -> usize {
        self.names.len()
    }

    /// Looks up by key first, then by description.
    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .or_else(|| self.descriptions.iter().position(|d| !d.is_empty() && d == name))
    }

    /// `id<TAB>name` lines, one per relation, in index order.
    pub fn to_tsv(&self) -> String {
        self.names
            .iter()
            .zip(&self.descriptions)
            .map(|(n, d)| format!("{n}\t{d}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub schema: RelationSchema,
    pub split: Split,
}

impl Corpus {
    /// Validates every document and checks relation ids against the schema.
    pub fn validate(&self) -> Result<(), CorpusError> {
        for (i, doc) in self.documents.iter().enumerate() {
            let mut violations = validate_document(doc);
            for (f, fact) in doc.facts.iter().enumerate() {
                if fact.relation >= self.schema.count() {
                    violations.push(Violation::RelationOutOfRange {
                        fact: f,
                        relation: fact.relation,
                    });
                }
            }
            if !violations.is_empty() {
                return Err(CorpusError::Invalid {
                    doc: i,
                    title: doc.title.clone(),
                    violations,
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("corpus serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let corpus: Corpus = serde_json::from_str(text).map_err(|e| CorpusError::Json(e.to_string()))?;
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// A two-sentence demo document: S0 "Alice works at Acme ." and S1 "Acme is
/// based in Paris .", with facts (Alice, Acme, 0) and (Acme, Paris, 1).
pub fn tiny_document() -> Document {
    Document {
        title: "T1".into(),
        sentences: vec![demo_sentence("Alice works at Acme ."), demo_sentence("Acme is based in Paris .")],
        entities: vec![
            Entity {
                entity_id: 0,
                mentions: vec![demo_mention(0, 0, 1, "Alice")],
            },
            Entity {
                entity_id: 1,
                mentions: vec![demo_mention(0, 3, 4, "Acme"), demo_mention(1, 0, 1, "Acme")],
            },
            Entity {
                entity_id: 2,
                mentions: vec![demo_mention(1, 4, 5, "Paris")],
            },
        ],
        facts: vec![
            RelationFact {
                head: 0,
                tail: 1,
                relation: 0,
                evidence: None,
            },
            RelationFact {
                head: 1,
                tail: 2,
                relation: 1,
                evidence: Some(vec![1]),
            },
        ],
    }
}

fn demo_mention(sentence: usize, start: usize, end: usize, surface: &str) -> Mention {
    Mention {
        sentence_index: sentence,
        token_start: start,
        token_end: end,
        surface: surface.into(),
    }
}

fn demo_sentence(text: &str) -> Vec<String> {
    text.split(' ').map(str::to_string).collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn mention(sentence: usize, start: usize, end: usize, surface: &str) -> Mention {
        demo_mention(sentence, start, end, surface)
    }

    pub fn sentence(text: &str) -> Vec<String> {
        demo_sentence(text)
    }

    pub fn tiny_doc() -> Document {
        tiny_document()
    }
}
