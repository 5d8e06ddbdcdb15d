//! DocRED public-release JSON: a top-level array of
//! `{title, sents, vertexSet, labels}` records.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Corpus, CorpusError, Document, Entity, Mention, RelationFact, RelationSchema, Split};

#[derive(Debug, Serialize, Deserialize)]
struct RawDocument {
    title: String,
    sents: Vec<Vec<String>>,
    #[serde(rename = "vertexSet")]
    vertex_set: Vec<Vec<RawMention>>,
    #[serde(default)]
    labels: Vec<RawLabel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawMention {
    name: String,
    sent_id: usize,
    pos: Vec<usize>,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawLabel {
    h: usize,
    t: usize,
    r: String,
    #[serde(default)]
    evidence: Vec<usize>,
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_docred(path: &Path, schema: &RelationSchema, split: Split) -> Result<Corpus, CorpusError> {
    parse_docred(&read(path)?, schema, split)
}

/// Parses DocRED JSON text. Mentions with identical spans inside one entity
/// are merged, as are repeated `(h, t, r)` labels (their evidence is unioned).
pub fn parse_docred(text: &str, schema: &RelationSchema, split: Split) -> Result<Corpus, CorpusError> {
    let records: Vec<Value> = serde_json::from_str(text).map_err(|e| CorpusError::Json(e.to_string()))?;
    let mut documents = Vec::with_capacity(records.len());
    for (i, record) in records.into_iter().enumerate() {
        let raw: RawDocument = serde_json::from_value(record).map_err(|e| CorpusError::Malformed {
            doc: i,
            field: "record".into(),
            reason: e.to_string(),
        })?;
        documents.push(convert(i, raw, schema)?);
    }
    let corpus = Corpus {
        documents,
        schema: schema.clone(),
        split,
    };
    corpus.validate()?;
    Ok(corpus)
}

fn convert(doc: usize, raw: RawDocument, schema: &RelationSchema) -> Result<Document, CorpusError> {
    let malformed = |field: String, reason: String| CorpusError::Malformed { doc, field, reason };
    let mut entities = Vec::with_capacity(raw.vertex_set.len());
    for (e, group) in raw.vertex_set.into_iter().enumerate() {
        let mut mentions: Vec<Mention> = Vec::with_capacity(group.len());
        for (m, rm) in group.into_iter().enumerate() {
            let field = format!("vertexSet[{e}][{m}]");
            let [start, end] = rm.pos[..] else {
                return Err(malformed(format!("{field}.pos"), format!("expected [start, end], got {:?}", rm.pos)));
            };
            let Some(sentence) = raw.sents.get(rm.sent_id) else {
                return Err(malformed(
                    format!("{field}.sent_id"),
                    format!("sentence {} of {}", rm.sent_id, raw.sents.len()),
                ));
            };
            if start >= end || end > sentence.len() {
                return Err(malformed(
                    format!("{field}.pos"),
                    format!("span [{start},{end}) outside sentence of {} tokens", sentence.len()),
                ));
            }
            let mention = Mention {
                sentence_index: rm.sent_id,
                token_start: start,
                token_end: end,
                surface: rm.name,
            };
            if !mentions.iter().any(|x| x.span() == mention.span()) {
                mentions.push(mention);
            }
        }
        if mentions.is_empty() {
            return Err(malformed(format!("vertexSet[{e}]"), "entity has no mentions".into()));
        }
        entities.push(Entity {
            entity_id: e,
            mentions,
        });
    }

    let mut merged: BTreeMap<(usize, usize, usize), (usize, Vec<usize>)> = BTreeMap::new();
    for (l, label) in raw.labels.into_iter().enumerate() {
        for (role, idx) in [("h", label.h), ("t", label.t)] {
            if idx >= entities.len() {
                return Err(malformed(
                    format!("labels[{l}].{role}"),
                    format!("entity {idx} of {}", entities.len()),
                ));
            }
        }
        let relation = schema.lookup(&label.r).ok_or_else(|| CorpusError::UnknownRelation {
            doc,
            name: label.r.clone(),
        })?;
        let slot = merged
            .entry((label.h, label.t, relation))
            .or_insert_with(|| (l, Vec::new()));
        for s in label.evidence {
            if !slot.1.contains(&s) {
                slot.1.push(s);
            }
        }
    }
    let mut facts: Vec<(usize, RelationFact)> = merged
        .into_iter()
        .map(|((head, tail, relation), (order, evidence))| {
            (
                order,
                RelationFact {
                    head,
                    tail,
                    relation,
                    evidence: Some(evidence),
                },
            )
        })
        .collect();
    facts.sort_by_key(|(order, _)| *order);

    Ok(Document {
        title: raw.title,
        sentences: raw.sents,
        entities,
        facts: facts.into_iter().map(|(_, f)| f).collect(),
    })
}

/// Serialises a corpus back into DocRED layout.
pub fn to_docred_json(corpus: &Corpus) -> String {
    let raw: Vec<RawDocument> = corpus
        .documents
        .iter()
        .map(|d| RawDocument {
            title: d.title.clone(),
            sents: d.sentences.clone(),
            vertex_set: d
                .entities
                .iter()
                .map(|e| {
                    e.mentions
                        .iter()
                        .map(|m| RawMention {
                            name: m.surface.clone(),
                            sent_id: m.sentence_index,
                            pos: vec![m.token_start, m.token_end],
                            kind: None,
                        })
                        .collect()
                })
                .collect(),
            labels: d
                .facts
                .iter()
                .map(|f| RawLabel {
                    h: f.head,
                    t: f.tail,
                    r: corpus.schema.names[f.relation].clone(),
                    evidence: f.evidence.clone().unwrap_or_default(),
                })
                .collect(),
        })
        .collect();
    serde_json::to_string(&raw).expect("documents serialize")
}

/// Reads a relation mapping: `id<TAB>name` lines (relation index = line
/// order), or a JSON object `{id: name}` as shipped with DocRED.
pub fn load_schema(path: &Path) -> Result<RelationSchema, CorpusError> {
    let text = read(path)?;
    if text.trim_start().starts_with('{') {
        let map: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| CorpusError::Schema(e.to_string()))?;
        let (names, descriptions) = map.into_iter().unzip();
        return RelationSchema::with_descriptions(names, descriptions);
    }
    let mut names = Vec::new();
    let mut descriptions = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let id = parts.next().unwrap_or_default().trim();
        if id.is_empty() {
            return Err(CorpusError::Schema(format!("line {}: empty relation id", n + 1)));
        }
        names.push(id.to_string());
        descriptions.push(parts.next().unwrap_or_default().trim().to_string());
    }
    RelationSchema::with_descriptions(names, descriptions)
}
