use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Document;

/// A broken document invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoSentences,
    EmptySentence { sentence: usize },
    EmptyEntity { entity: usize },
    EntityIdMismatch { position: usize, entity_id: usize },
    SentenceOutOfRange { entity: usize, mention: usize, sentence: usize },
    SpanOutOfRange { entity: usize, mention: usize, start: usize, end: usize, sentence_len: usize },
    EntityOutOfRange { fact: usize, entity: usize },
    SelfRelation { fact: usize, entity: usize },
    DuplicateFact { fact: usize, head: usize, tail: usize, relation: usize },
    RelationOutOfRange { fact: usize, relation: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSentences => write!(f, "document has no sentences"),
            Violation::EmptySentence { sentence } => write!(f, "sentence {sentence} has no tokens"),
            Violation::EmptyEntity { entity } => write!(f, "entity {entity} has no mentions"),
            Violation::EntityIdMismatch {
                position,
                entity_id,
            } => write!(f, "entity at position {position} carries id {entity_id}"),
            Violation::SentenceOutOfRange {
                entity,
                mention,
                sentence,
            } => write!(f, "entity {entity} mention {mention}: sentence {sentence} does not exist"),
            Violation::SpanOutOfRange {
                entity,
                mention,
                start,
                end,
                sentence_len,
            } => write!(
                f,
                "entity {entity} mention {mention}: span [{start},{end}) invalid for sentence of {sentence_len} tokens"
            ),
            Violation::EntityOutOfRange { fact, entity } => {
                write!(f, "fact {fact}: entity {entity} does not exist")
            }
            Violation::SelfRelation { fact, entity } => {
                write!(f, "fact {fact}: head and tail are both entity {entity}")
            }
            Violation::DuplicateFact {
                fact,
                head,
                tail,
                relation,
            } => write!(f, "fact {fact}: duplicate ({head}, {tail}, {relation})"),
            Violation::RelationOutOfRange { fact, relation } => {
                write!(f, "fact {fact}: relation {relation} outside the schema")
            }
        }
    }
}

/// Every invariant violation in `doc`; empty iff the document is valid.
pub fn validate_document(doc: &Document) -> Vec<Violation> {
    let mut out = Vec::new();
    if doc.sentences.is_empty() {
        out.push(Violation::NoSentences);
    }
    for (i, s) in doc.sentences.iter().enumerate() {
        if s.is_empty() {
            out.push(Violation::EmptySentence { sentence: i });
        }
    }
    for (e, entity) in doc.entities.iter().enumerate() {
        if entity.entity_id != e {
            out.push(Violation::EntityIdMismatch {
                position: e,
                entity_id: entity.entity_id,
            });
        }
        if entity.mentions.is_empty() {
            out.push(Violation::EmptyEntity { entity: e });
        }
        for (m, mention) in entity.mentions.iter().enumerate() {
            let Some(sentence) = doc.sentences.get(mention.sentence_index) else {
                out.push(Violation::SentenceOutOfRange {
                    entity: e,
                    mention: m,
                    sentence: mention.sentence_index,
                });
                continue;
            };
            if mention.token_start >= mention.token_end || mention.token_end > sentence.len() {
                out.push(Violation::SpanOutOfRange {
                    entity: e,
                    mention: m,
                    start: mention.token_start,
                    end: mention.token_end,
                    sentence_len: sentence.len(),
                });
            }
        }
    }
    let mut seen = BTreeSet::new();
    for (f, fact) in doc.facts.iter().enumerate() {
        for entity in [fact.head, fact.tail] {
            if entity >= doc.entities.len() {
                out.push(Violation::EntityOutOfRange { fact: f, entity });
            }
        }
        if fact.head == fact.tail {
            out.push(Violation::SelfRelation {
                fact: f,
                entity: fact.head,
            });
        }
        if !seen.insert((fact.head, fact.tail, fact.relation)) {
            out.push(Violation::DuplicateFact {
                fact: f,
                head: fact.head,
                tail: fact.tail,
                relation: fact.relation,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::tiny_doc;
    use crate::corpus::RelationFact;

    #[test]
    fn tiny_doc_is_valid() {
        assert_eq!(validate_document(&tiny_doc()), vec![]);
    }

    #[test]
    fn span_past_sentence_end() {
        let mut doc = tiny_doc();
        doc.entities[2].mentions[0].token_end = 9;
        let v = validate_document(&doc);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::SpanOutOfRange { entity: 2, .. }));
    }

    #[test]
    fn self_relation() {
        let mut doc = tiny_doc();
        doc.facts.push(RelationFact {
            head: 2,
            tail: 2,
            relation: 0,
            evidence: None,
        });
        assert_eq!(
            validate_document(&doc),
            vec![Violation::SelfRelation { fact: 2, entity: 2 }]
        );
    }

    #[test]
    fn duplicate_fact_and_empty_entity() {
        let mut doc = tiny_doc();
        doc.facts.push(doc.facts[0].clone());
        doc.entities[0].mentions.clear();
        let v = validate_document(&doc);
        assert!(v.contains(&Violation::EmptyEntity { entity: 0 }));
        assert!(v.iter().any(|x| matches!(x, Violation::DuplicateFact { fact: 2, .. })));
    }

    #[test]
    fn empty_sentence_rejected() {
        let mut doc = tiny_doc();
        doc.sentences.push(vec![]);
        assert_eq!(validate_document(&doc), vec![Violation::EmptySentence { sentence: 2 }]);
    }
}
