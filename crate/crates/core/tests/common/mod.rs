//! Shared helpers for the integration tests: a varied seeded corpus and
//! brute-force graph oracles written directly from the edge definitions.

#![allow(dead_code)]

use std::collections::BTreeSet;

use gracr::corpus::{generate_synthetic, validate_document, Document, GeneratorConfig, Mention, RelationSchema};
use gracr::graphs::{EdgeType, NodeKind, NodeRef, TypedEdge};

pub type Edge = (EdgeType, NodeRef, NodeRef);

fn edge(t: EdgeType, x: NodeRef, y: NodeRef) -> Edge {
    (t, x.min(y), x.max(y))
}

pub fn edge_set<'a>(edges: impl Iterator<Item = &'a TypedEdge>) -> BTreeSet<Edge> {
    edges.map(|e| (e.edge_type, e.a, e.b)).collect()
}

/// `(entity, sentence)` of every mention, in global mention-id order.
fn flat_mentions(doc: &Document) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (e, ent) in doc.entities.iter().enumerate() {
        for m in &ent.mentions {
            out.push((e, m.sentence_index));
        }
    }
    out
}

/// Every node pair checked against the three mention/sentence edge rules.
pub fn oracle_dlg(doc: &Document) -> BTreeSet<Edge> {
    let ms = flat_mentions(doc);
    let mut nodes: Vec<NodeRef> = (0..doc.sentences.len()).map(NodeRef::sentence).collect();
    nodes.extend((0..ms.len()).map(NodeRef::mention));
    let mut out = BTreeSet::new();
    for (i, &x) in nodes.iter().enumerate() {
        for &y in &nodes[i + 1..] {
            match (x.kind, y.kind) {
                (NodeKind::Mention, NodeKind::Mention) => {
                    let (a, b) = (ms[x.index], ms[y.index]);
                    if a.0 != b.0 && a.1 == b.1 {
                        out.insert(edge(EdgeType::MentionMention, x, y));
                    }
                }
                (NodeKind::Mention, NodeKind::Sentence) => {
                    if ms[x.index].1 == y.index {
                        out.insert(edge(EdgeType::MentionSentence, x, y));
                    }
                }
                (NodeKind::Sentence, NodeKind::Mention) => {
                    if ms[y.index].1 == x.index {
                        out.insert(edge(EdgeType::MentionSentence, x, y));
                    }
                }
                (NodeKind::Sentence, NodeKind::Sentence) => {
                    out.insert(edge(EdgeType::SentenceSentence, x, y));
                }
                _ => unreachable!("no entity nodes"),
            }
        }
    }
    out
}

fn occurs(doc: &Document, e: usize, s: usize) -> bool {
    doc.entities[e].mentions.iter().any(|m| m.sentence_index == s)
}

/// Smallest `(s1, s2)` witnessing bridge `k` between `i` and `j`, by
/// exhaustive search over sentence pairs.
pub fn oracle_bridge(doc: &Document, i: usize, k: usize, j: usize) -> Option<(usize, usize)> {
    if k == i || k == j || i == j {
        return None;
    }
    let n = doc.sentences.len();
    for s1 in 0..n {
        for s2 in 0..n {
            if s1 != s2 && occurs(doc, i, s1) && occurs(doc, k, s1) && occurs(doc, k, s2) && occurs(doc, j, s2) {
                return Some((s1, s2));
            }
        }
    }
    None
}

/// All `(i, k, j, s1, s2)` tuples for LOGIC, all `(i, j, s)` for INTRA.
pub fn oracle_elg(doc: &Document) -> BTreeSet<Edge> {
    let n = doc.entities.len();
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (x, y) = (NodeRef::entity(i), NodeRef::entity(j));
            if (0..doc.sentences.len()).any(|s| occurs(doc, i, s) && occurs(doc, j, s)) {
                out.insert(edge(EdgeType::Intra, x, y));
            }
            if (0..n).any(|k| oracle_bridge(doc, i, k, j).is_some()) {
                out.insert(edge(EdgeType::Logic, x, y));
            }
        }
    }
    out
}

/// Global mention id of entity `e`'s first mention in sentence `s`.
pub fn mention_id(doc: &Document, e: usize, s: usize) -> usize {
    let before: usize = doc.entities[..e].iter().map(|x| x.mentions.len()).sum();
    before + doc.entities[e].mentions.iter().position(|m| m.sentence_index == s).unwrap()
}

/// Merges sentence `s + 1` into `s`, shifting later sentences down.
fn merge_sentences(doc: &mut Document, s: usize) {
    let tail = doc.sentences.remove(s + 1);
    let offset = doc.sentences[s].len();
    doc.sentences[s].extend(tail);
    for ent in &mut doc.entities {
        for m in &mut ent.mentions {
            if m.sentence_index == s + 1 {
                m.sentence_index = s;
                m.token_start += offset;
                m.token_end += offset;
            } else if m.sentence_index > s + 1 {
                m.sentence_index -= 1;
            }
        }
        ent.mentions.sort_by_key(|m| m.span());
    }
    for f in &mut doc.facts {
        if let Some(ev) = &mut f.evidence {
            for x in ev.iter_mut() {
                if *x > s {
                    *x -= 1;
                }
            }
            ev.dedup();
        }
    }
}

/// Repeats entity `e`'s first mention at the end of its sentence.
fn repeat_mention(doc: &mut Document, e: usize) {
    let m = doc.entities[e].mentions[0].clone();
    let words: Vec<String> = doc.sentences[m.sentence_index][m.token_start..m.token_end].to_vec();
    let sentence = &mut doc.sentences[m.sentence_index];
    let start = sentence.len();
    sentence.extend(words);
    doc.entities[e].mentions.push(Mention {
        sentence_index: m.sentence_index,
        token_start: start,
        token_end: sentence.len(),
        surface: m.surface,
    });
    doc.entities[e].mentions.sort_by_key(|m| m.span());
}

/// 500 seeded documents with varied sizes and bridge density. Some get
/// merged sentences (more co-occurrence, bridges inside one sentence) or a
/// repeated mention of one entity in the same sentence.
pub fn oracle_corpus() -> Vec<Document> {
    let schema = RelationSchema::numbered(3);
    (0..500u64)
        .map(|seed| {
            let knobs = GeneratorConfig {
                entities_per_doc: 2 + (seed % 9) as usize,
                facts_per_doc: 1 + (seed % 5) as usize,
                inter_fraction: (seed % 11) as f64 / 10.0,
                sentences_per_doc: 1 + (seed % 8) as usize,
                max_filler: (seed % 3) as usize,
                two_token_names: 0.3,
            };
            let mut doc = generate_synthetic(seed, 1, &schema, &knobs).expect("valid knobs").documents.remove(0);
            if seed % 3 == 0 && doc.sentences.len() > 2 {
                let at = (seed as usize / 3) % (doc.sentences.len() - 1);
                merge_sentences(&mut doc, at);
            }
            if seed % 4 == 0 {
                let e = (seed as usize / 4) % doc.entities.len();
                repeat_mention(&mut doc, e);
            }
            assert!(validate_document(&doc).is_empty(), "mutated document {seed} is invalid");
            doc
        })
        .collect()
}
