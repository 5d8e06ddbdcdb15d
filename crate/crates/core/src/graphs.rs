//! The mention/sentence document graph, the entity-level reasoning graph, and
//! the intra-sentence / bridge reasoning paths that justify their edges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{validate_document, Document, Violation};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("invalid document: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidDocument(Vec<Violation>),
    #[error("head and tail are the same entity ({0})")]
    SameEntity(usize),
    #[error("entity {entity} out of range ({count} entities)")]
    EntityOutOfRange { entity: usize, count: usize },
    #[error("illegal {edge_type:?} edge between {a} and {b}")]
    IllegalEdge { edge_type: EdgeType, a: NodeRef, b: NodeRef },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Sentence,
    Mention,
    Entity,
}

/// A node of either graph. Mention indices are global ids: mentions numbered
/// entity by entity, in mention order within each entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeRef {
    pub fn sentence(index: usize) -> Self {
        Self {
            kind: NodeKind::Sentence,
            index,
        }
    }

    pub fn mention(index: usize) -> Self {
        Self {
            kind: NodeKind::Mention,
            index,
        }
    }

    pub fn entity(index: usize) -> Self {
        Self {
            kind: NodeKind::Entity,
            index,
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            NodeKind::Sentence => "S",
            NodeKind::Mention => "M",
            NodeKind::Entity => "E",
        };
        write!(f, "{prefix}{}", self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeType {
    #[serde(rename = "MM")]
    MentionMention,
    #[serde(rename = "MS")]
    MentionSentence,
    #[serde(rename = "SS")]
    SentenceSentence,
    #[serde(rename = "INTRA")]
    Intra,
    #[serde(rename = "LOGIC")]
    Logic,
}

impl EdgeType {
    pub const DOCUMENT: [EdgeType; 3] = [
        EdgeType::MentionMention,
        EdgeType::MentionSentence,
        EdgeType::SentenceSentence,
    ];
    pub const ENTITY: [EdgeType; 2] = [EdgeType::Intra, EdgeType::Logic];

    pub fn tag(self) -> &'static str {
        match self {
            EdgeType::MentionMention => "MM",
            EdgeType::MentionSentence => "MS",
            EdgeType::SentenceSentence => "SS",
            EdgeType::Intra => "INTRA",
            EdgeType::Logic => "LOGIC",
        }
    }

    fn legal(self, a: NodeKind, b: NodeKind) -> bool {
        use NodeKind::*;
        match self {
            EdgeType::MentionMention => a == Mention && b == Mention,
            EdgeType::MentionSentence => matches!((a, b), (Mention, Sentence) | (Sentence, Mention)),
            EdgeType::SentenceSentence => a == Sentence && b == Sentence,
            EdgeType::Intra | EdgeType::Logic => a == Entity && b == Entity,
        }
    }
}

/// Undirected typed edge; endpoints are stored in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "(EdgeType, NodeRef, NodeRef)", try_from = "(EdgeType, NodeRef, NodeRef)")]
pub struct TypedEdge {
    pub edge_type: EdgeType,
    pub a: NodeRef,
    pub b: NodeRef,
}

impl TypedEdge {
    pub fn new(edge_type: EdgeType, x: NodeRef, y: NodeRef) -> Result<Self, GraphError> {
        if x == y || !edge_type.legal(x.kind, y.kind) {
            return Err(GraphError::IllegalEdge { edge_type, a: x, b: y });
        }
        Ok(Self {
            edge_type,
            a: x.min(y),
            b: x.max(y),
        })
    }
}

impl From<TypedEdge> for (EdgeType, NodeRef, NodeRef) {
    fn from(e: TypedEdge) -> Self {
        (e.edge_type, e.a, e.b)
    }
}

impl TryFrom<(EdgeType, NodeRef, NodeRef)> for TypedEdge {
    type Error = GraphError;

    fn try_from((t, a, b): (EdgeType, NodeRef, NodeRef)) -> Result<Self, Self::Error> {
        TypedEdge::new(t, a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionNode {
    pub entity: usize,
    pub ordinal: usize,
    pub sentence: usize,
    pub token_start: usize,
    pub token_end: usize,
}

/// Per-type neighbour lists over node rows, as consumed by relational
/// graph convolution. Every undirected edge appears in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationalAdjacency {
    pub node_count: usize,
    pub per_type: Vec<(EdgeType, Arc<Vec<Vec<usize>>>)>,
}

impl RelationalAdjacency {
    pub fn from_edges(
        node_count: usize,
        types: &[EdgeType],
        edges: impl IntoIterator<Item = (EdgeType, usize, usize)>,
    ) -> Self {
        let mut lists: BTreeMap<EdgeType, Vec<Vec<usize>>> =
            types.iter().map(|&t| (t, vec![Vec::new(); node_count])).collect();
        for (t, a, b) in edges {
            if let Some(l) = lists.get_mut(&t) {
                l[a].push(b);
                l[b].push(a);
            }
        }
        Self {
            node_count,
            per_type: types
                .iter()
                .map(|t| {
                    let mut l = lists.remove(t).expect("type present");
                    l.iter_mut().for_each(|n| n.sort_unstable());
                    (*t, Arc::new(l))
                })
                .collect(),
        }
    }

    pub fn neighbors(&self, edge_type: EdgeType) -> Option<&Arc<Vec<Vec<usize>>>> {
        self.per_type.iter().find(|(t, _)| *t == edge_type).map(|(_, l)| l)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentGraph {
    pub sentence_count: usize,
    /// Indexed by global mention id.
    pub mentions: Vec<MentionNode>,
    pub edges: BTreeSet<TypedEdge>,
}

impl DocumentGraph {
    pub fn nodes(&self) -> Vec<NodeRef> {
        (0..self.sentence_count)
            .map(NodeRef::sentence)
            .chain((0..self.mentions.len()).map(NodeRef::mention))
            .collect()
    }

    /// Row of a node in the stacked `[sentences; mentions]` state matrix.
    pub fn row_of(&self, node: NodeRef) -> usize {
        match node.kind {
            NodeKind::Sentence => node.index,
            NodeKind::Mention => self.sentence_count + node.index,
            NodeKind::Entity => panic!("document graph has no entity nodes"),
        }
    }

    pub fn edges_of(&self, edge_type: EdgeType) -> impl Iterator<Item = &TypedEdge> {
        self.edges.iter().filter(move |e| e.edge_type == edge_type)
    }

    pub fn adjacency(&self) -> RelationalAdjacency {
        RelationalAdjacency::from_edges(
            self.sentence_count + self.mentions.len(),
            &EdgeType::DOCUMENT,
            self.edges
                .iter()
                .map(|e| (e.edge_type, self.row_of(e.a), self.row_of(e.b))),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityGraph {
    pub entity_count: usize,
    pub edges: BTreeSet<TypedEdge>,
}

impl EntityGraph {
    pub fn edges_of(&self, edge_type: EdgeType) -> impl Iterator<Item = &TypedEdge> {
        self.edges.iter().filter(move |e| e.edge_type == edge_type)
    }

    pub fn has_edge(&self, edge_type: EdgeType, i: usize, j: usize) -> bool {
        TypedEdge::new(edge_type, NodeRef::entity(i), NodeRef::entity(j))
            .map(|e| self.edges.contains(&e))
            .unwrap_or(false)
    }

    /// Adjacency restricted to the given edge types.
    pub fn adjacency(&self, types: &[EdgeType]) -> RelationalAdjacency {
        RelationalAdjacency::from_edges(
            self.entity_count,
            types,
            self.edges.iter().map(|e| (e.edge_type, e.a.index, e.b.index)),
        )
    }
}

fn check(doc: &Document) -> Result<(), GraphError> {
    let v = validate_document(doc);
    if v.is_empty() {
        Ok(())
    } else {
        Err(GraphError::InvalidDocument(v))
    }
}

pub fn mention_nodes(doc: &Document) -> Vec<MentionNode> {
    doc.entities
        .iter()
        .enumerate()
        .flat_map(|(e, ent)| {
            ent.mentions.iter().enumerate().map(move |(o, m)| MentionNode {
                entity: e,
                ordinal: o,
                sentence: m.sentence_index,
                token_start: m.token_start,
                token_end: m.token_end,
            })
        })
        .collect()
}

/// Mention-mention edges join mentions of different entities in one sentence,
/// mention-sentence edges join a mention to its sentence, and every pair of
/// sentences is joined.
pub fn build_dlg(doc: &Document) -> Result<DocumentGraph, GraphError> {
    check(doc)?;
    let mentions = mention_nodes(doc);
    let mut by_sentence: Vec<Vec<usize>> = vec![Vec::new(); doc.sentences.len()];
    for (id, m) in mentions.iter().enumerate() {
        by_sentence[m.sentence].push(id);
    }
    let mut edges = BTreeSet::new();
    for (s, ids) in by_sentence.iter().enumerate() {
        for (x, &p) in ids.iter().enumerate() {
            edges.insert(TypedEdge::new(
                EdgeType::MentionSentence,
                NodeRef::mention(p),
                NodeRef::sentence(s),
            )?);
            for &q in &ids[x + 1..] {
                if mentions[p].entity != mentions[q].entity {
                    edges.insert(TypedEdge::new(
                        EdgeType::MentionMention,
                        NodeRef::mention(p),
                        NodeRef::mention(q),
                    )?);
                }
            }
        }
    }
    for s in 0..doc.sentences.len() {
        for t in s + 1..doc.sentences.len() {
            edges.insert(TypedEdge::new(
                EdgeType::SentenceSentence,
                NodeRef::sentence(s),
                NodeRef::sentence(t),
            )?);
        }
    }
    Ok(DocumentGraph {
        sentence_count: doc.sentences.len(),
        mentions,
        edges,
    })
}

/// Distinct entities mentioned in each sentence, ascending.
fn entities_by_sentence(doc: &Document) -> Vec<BTreeSet<usize>> {
    let mut out = vec![BTreeSet::new(); doc.sentences.len()];
    for (e, ent) in doc.entities.iter().enumerate() {
        for m in &ent.mentions {
            out[m.sentence_index].insert(e);
        }
    }
    out
}

/// Intra edges join co-occurring entities; logic edges join `i` and `j` when
/// a third entity shares one sentence with `i` and a different one with `j`.
pub fn build_elg(doc: &Document) -> Result<EntityGraph, GraphError> {
    check(doc)?;
    let by_sentence = entities_by_sentence(doc);
    let mut edges = BTreeSet::new();
    for ents in &by_sentence {
        let ents: Vec<usize> = ents.iter().copied().collect();
        for (x, &i) in ents.iter().enumerate() {
            for &j in &ents[x + 1..] {
                edges.insert(TypedEdge::new(EdgeType::Intra, NodeRef::entity(i), NodeRef::entity(j))?);
            }
        }
    }
    for k in 0..doc.entities.len() {
        let sents: Vec<usize> = doc.entity_sentences(k).into_iter().collect();
        for &s1 in &sents {
            for &s2 in &sents {
                if s1 >= s2 {
                    continue;
                }
                for &i in by_sentence[s1].iter().filter(|&&i| i != k) {
                    for &j in by_sentence[s2].iter().filter(|&&j| j != k && j != i) {
                        edges.insert(TypedEdge::new(EdgeType::Logic, NodeRef::entity(i), NodeRef::entity(j))?);
                    }
                }
            }
        }
    }
    Ok(EntityGraph {
        entity_count: doc.entities.len(),
        edges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    #[serde(rename = "PI")]
    Intra,
    #[serde(rename = "PL")]
    Logical,
}

/// `m_i -> s -> m_j` (intra) or `m_i -> s1 -> m_k -> m_k' -> s2 -> m_j` (logical).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub kind: PathKind,
    pub hops: Vec<NodeRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bridge {
    pub entity: usize,
    pub path: ReasoningPath,
}

fn pair_args(doc: &Document, ei: usize, ej: usize) -> Result<(), GraphError> {
    for e in [ei, ej] {
        if e >= doc.entities.len() {
            return Err(GraphError::EntityOutOfRange {
                entity: e,
                count: doc.entities.len(),
            });
        }
    }
    if ei == ej {
        return Err(GraphError::SameEntity(ei));
    }
    Ok(())
}

/// Global id of the first mention of `entity` in `sentence`.
fn mention_in(doc: &Document, entity: usize, sentence: usize) -> Option<usize> {
    let base: usize = doc.entities[..entity].iter().map(|e| e.mentions.len()).sum();
    doc.entities[entity]
        .mentions
        .iter()
        .position(|m| m.sentence_index == sentence)
        .map(|o| base + o)
}

/// Every bridge entity between `ei` and `ej`, each with the witnessing path
/// whose `(s1, s2)` sentence pair is smallest.
pub fn find_bridges(doc: &Document, ei: usize, ej: usize) -> Result<Vec<Bridge>, GraphError> {
    pair_args(doc, ei, ej)?;
    let si = doc.entity_sentences(ei);
    let sj = doc.entity_sentences(ej);
    let mut out = Vec::new();
    for k in (0..doc.entities.len()).filter(|&k| k != ei && k != ej) {
        let sk = doc.entity_sentences(k);
        let witness = si
            .intersection(&sk)
            .flat_map(|&s1| sk.intersection(&sj).map(move |&s2| (s1, s2)))
            .find(|(s1, s2)| s1 != s2);
        if let Some((s1, s2)) = witness {
            let hops = vec![
                NodeRef::mention(mention_in(doc, ei, s1).expect("witnessed")),
                NodeRef::sentence(s1),
                NodeRef::mention(mention_in(doc, k, s1).expect("witnessed")),
                NodeRef::mention(mention_in(doc, k, s2).expect("witnessed")),
                NodeRef::sentence(s2),
                NodeRef::mention(mention_in(doc, ej, s2).expect("witnessed")),
            ];
            out.push(Bridge {
                entity: k,
                path: ReasoningPath {
                    kind: PathKind::Logical,
                    hops,
                },
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExplanation {
    pub head: usize,
    pub tail: usize,
    pub intra: Vec<ReasoningPath>,
    pub logical: Vec<Bridge>,
}

pub fn explain_pair(doc: &Document, ei: usize, ej: usize) -> Result<PairExplanation, GraphError> {
    pair_args(doc, ei, ej)?;
    let shared: Vec<usize> = doc
        .entity_sentences(ei)
        .intersection(&doc.entity_sentences(ej))
        .copied()
        .collect();
    let intra = shared
        .into_iter()
        .map(|s| ReasoningPath {
            kind: PathKind::Intra,
            hops: vec![
                NodeRef::mention(mention_in(doc, ei, s).expect("shared")),
                NodeRef::sentence(s),
                NodeRef::mention(mention_in(doc, ej, s).expect("shared")),
            ],
        })
        .collect();
    Ok(PairExplanation {
        head: ei,
        tail: ej,
        intra,
        logical: find_bridges(doc, ei, ej)?,
    })
}

/// `Alice@S0 -> S0 -> Acme@S0 -> ...`
pub fn render_path(doc: &Document, path: &ReasoningPath) -> String {
    let mentions = mention_nodes(doc);
    path.hops
        .iter()
        .map(|h| match h.kind {
            NodeKind::Mention => {
                let m = &mentions[h.index];
                format!("{}@S{}", doc.entities[m.entity].mentions[m.ordinal].surface, m.sentence)
            }
            _ => h.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" -> ")
}

impl PairExplanation {
    pub fn render(&self, doc: &Document) -> String {
        let name = |e: usize| doc.entities[e].name().to_string();
        let mut out = format!(
            "E{} \"{}\" -> E{} \"{}\"\n",
            self.head,
            name(self.head),
            self.tail,
            name(self.tail)
        );
        out.push_str(&format!("  intra-sentence paths (PI): {}\n", self.intra.len()));
        for p in &self.intra {
            out.push_str(&format!("    {}\n", render_path(doc, p)));
        }
        out.push_str(&format!("  logical paths (PL): {}\n", self.logical.len()));
        for b in &self.logical {
            out.push_str(&format!(
                "    via E{} \"{}\": {}\n",
                b.entity,
                name(b.entity),
                render_path(doc, &b.path)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphNode {
    #[serde(flatten)]
    pub node: NodeRef,
    pub label: String,
}

/// JSON export of both graphs for one document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphExport {
    pub title: String,
    pub dlg_nodes: Vec<GraphNode>,
    pub dlg_edges: Vec<TypedEdge>,
    pub elg_nodes: Vec<GraphNode>,
    pub elg_edges: Vec<TypedEdge>,
}

pub fn export_graphs(doc: &Document) -> Result<GraphExport, GraphError> {
    let dlg = build_dlg(doc)?;
    let elg = build_elg(doc)?;
    let dlg_nodes = dlg
        .nodes()
        .into_iter()
        .map(|n| GraphNode {
            node: n,
            label: match n.kind {
                NodeKind::Sentence => doc.sentences[n.index].join(" "),
                _ => {
                    let m = &dlg.mentions[n.index];
                    doc.entities[m.entity].mentions[m.ordinal].surface.clone()
                }
            },
        })
        .collect();
    let elg_nodes = (0..elg.entity_count)
        .map(|e| GraphNode {
            node: NodeRef::entity(e),
            label: doc.entities[e].name().to_string(),
        })
        .collect();
    Ok(GraphExport {
        title: doc.title.clone(),
        dlg_nodes,
        dlg_edges: dlg.edges.into_iter().collect(),
        elg_nodes,
        elg_edges: elg.edges.into_iter().collect(),
    })
}
