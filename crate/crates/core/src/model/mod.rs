//! The relation extraction network: a document graph over sentences and
//! mentions, an entity graph with co-occurrence and bridge edges, attention
//! fusion of the two, and a pairwise multi-label classifier with
//! document-wide pair context.

pub mod layers;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Document;
use crate::encoder::{self, EncoderError, Vocabulary};
use crate::graphs::{build_dlg, build_elg, EdgeType, GraphError};
use crate::numerics::{
    gaussian_init, orthogonal_init, NumericsError, ParamCheckpoint, ParamRegistry, Tape, Tensor, Var,
};

pub use layers::{
    bce_loss, context_representation, distance_bucket, fuse_dlg, fuse_final, init_dlg_states,
    init_elg_states, pair_representations, pool_entity_initial, pool_entity_pre, predict_pairs,
    rgcn_forward, Attention, ClassifierWeights, RgcnLayer, TypeEmbeddings,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("document has no entities")]
    EmptyDocument,
    #[error("document has fewer than two entities, so no pairs to score")]
    NoPairs,
    #[error("pair uses the same entity ({0}) twice")]
    SameEntity(usize),
    #[error("entity {0} out of range")]
    EntityOutOfRange(usize),
    #[error("no weight for edge type {0:?}")]
    MissingEdgeWeight(EdgeType),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder width.
    pub d_w: usize,
    /// Node-type embedding width.
    pub d_t: usize,
    /// Distance embedding width.
    pub d_dist: usize,
    /// Graph convolution layers per graph.
    pub layers: usize,
    pub n_relations: usize,
    /// Longest document the position table covers.
    pub max_len: usize,
    /// Vocabulary frequency cutoff.
    pub min_count: usize,
    /// Largest token distance in each positive distance bucket; larger
    /// distances share one extra bucket.
    pub bucket_bounds: Vec<u64>,
    pub use_aggregation: bool,
    pub use_reasoning: bool,
    pub use_intra_edges: bool,
    pub use_logic_edges: bool,
    /// Each entity attends only to itself in both fusion steps.
    pub per_entity_softmax: bool,
    /// The target pair is part of its own context pool.
    pub context_includes_target: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_w: 32,
            d_t: 8,
            d_dist: 8,
            layers: 2,
            n_relations: 1,
            max_len: 1024,
            min_count: 1,
            bucket_bounds: vec![0, 1, 2, 4, 8, 16, 32, 64],
            use_aggregation: true,
            use_reasoning: true,
            use_intra_edges: true,
            use_logic_edges: true,
            per_entity_softmax: false,
            context_includes_target: true,
            seed: 1,
        }
    }
}

impl ModelConfig {
    /// Document-graph node width.
    pub fn d_n(&self) -> usize {
        self.d_w + self.d_t
    }

    /// Entity-graph node width.
    pub fn d_e(&self) -> usize {
        self.d_n() + self.d_t
    }

    /// Pair representation width.
    pub fn d_r(&self) -> usize {
        2 * (self.d_n() + self.d_dist)
    }

    pub fn distance_rows(&self) -> usize {
        2 * self.bucket_bounds.len() + 1
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("d_w", self.d_w),
            ("d_t", self.d_t),
            ("d_dist", self.d_dist),
            ("layers", self.layers),
            ("n_relations", self.n_relations),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be at least 1")));
        }
        if self.bucket_bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::Config("bucket_bounds must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Edge types kept in the entity graph.
    pub fn entity_edge_types(&self) -> Vec<EdgeType> {
        let mut t = Vec::new();
        if self.use_intra_edges {
            t.push(EdgeType::Intra);
        }
        if self.use_logic_edges {
            t.push(EdgeType::Logic);
        }
        t
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

pub mod names {
    pub const TYPE_SENTENCE: &str = "types.sentence";
    pub const TYPE_MENTION: &str = "types.mention";
    pub const TYPE_ENTITY: &str = "types.entity";
    pub const FUSION_PRE: &str = "fusion.pre";
    pub const FUSION_H: &str = "fusion.h";
    pub const FUSION_DLG: &str = "fusion.dlg";
    pub const FUSION_ELG: &str = "fusion.elg";
    pub const DIST_EMB: &str = "cls.dist_emb";
    pub const CONTEXT_W: &str = "cls.context_w";
    pub const HIDDEN_W: &str = "cls.hidden_w";
    pub const HIDDEN_B: &str = "cls.hidden_b";
    pub const OUT_W: &str = "cls.out_w";
    pub const OUT_B: &str = "cls.out_b";

    pub fn dlg(layer: usize, part: &str) -> String {
        format!("dlg.l{layer}.{part}")
    }

    pub fn elg(layer: usize, part: &str) -> String {
        format!("elg.l{layer}.{part}")
    }
}

/// Fresh parameters in a fixed registration order; each tensor gets its own
/// seed drawn from `config.seed`.
pub fn init_params(config: &ModelConfig, vocab_size: usize) -> Result<ParamRegistry, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seed = || rng.next_u64();
    let mut reg = ParamRegistry::new();
    let (d_w, d_t, d_n, d_e, d_r) = (config.d_w, config.d_t, config.d_n(), config.d_e(), config.d_r());

    encoder::register_params(&mut reg, vocab_size, d_w, config.max_len, &mut seed)?;
    for name in [names::TYPE_SENTENCE, names::TYPE_MENTION, names::TYPE_ENTITY] {
        reg.insert(name, gaussian_init((1, d_t), 0.1, seed()))?;
    }
    // Each layer sums a self term and one neighbour mean per edge type, so
    // orthogonal weights are scaled by 1/sqrt(terms) to keep activations
    // from growing with depth. Unscaled, entity states blow up and the final
    // fusion attention saturates onto a single entity.
    let gcn = |shape: (usize, usize), terms: usize, seed: u64| {
        let mut t = orthogonal_init(shape, seed);
        let g = 1.0 / (terms as f64).sqrt();
        t.data_mut().iter_mut().for_each(|x| *x *= g);
        t
    };
    for l in 0..config.layers {
        for part in ["self", "MM", "MS", "SS"] {
            reg.insert(names::dlg(l, part), gcn((d_n, d_n), 1 + EdgeType::DOCUMENT.len(), seed()))?;
        }
    }
    for l in 0..config.layers {
        for part in ["self", "INTRA", "LOGIC"] {
            reg.insert(names::elg(l, part), gcn((d_e, d_e), 1 + EdgeType::ENTITY.len(), seed()))?;
        }
    }
    reg.insert(names::FUSION_PRE, orthogonal_init((d_n, d_n), seed()))?;
    reg.insert(names::FUSION_H, orthogonal_init((d_w, d_n), seed()))?;
    reg.insert(names::FUSION_DLG, orthogonal_init((d_n, d_n), seed()))?;
    reg.insert(names::FUSION_ELG, orthogonal_init((d_e, d_n), seed()))?;
    reg.insert(names::DIST_EMB, gaussian_init((config.distance_rows(), config.d_dist), 0.1, seed()))?;
    reg.insert(names::CONTEXT_W, orthogonal_init((d_r, d_r), seed()))?;
    reg.insert(names::HIDDEN_W, orthogonal_init((2 * d_r, d_r), seed()))?;
    reg.insert(names::HIDDEN_B, Tensor::zeros(1, d_r))?;
    reg.insert(names::OUT_W, orthogonal_init((d_r, config.n_relations), seed()))?;
    reg.insert(names::OUT_B, Tensor::zeros(1, config.n_relations))?;
    Ok(reg)
}

/// Entity states in canonical order (see [`canonical_order`]).
#[derive(Debug, Clone)]
pub struct EntityStates {
    pub e_h: Var,
    pub e_pre: Var,
    pub e_dlg: Var,
    pub e_elg: Option<Var>,
    pub e_rep: Var,
}

#[derive(Debug, Clone)]
pub struct DocumentForward {
    /// Ordered pairs in original entity ids, lexicographic.
    pub pairs: Vec<(usize, usize)>,
    /// `pairs.len() x n_relations`, row `i` scoring `pairs[i]`.
    pub probs: Var,
    /// Canonical entity `i` is original entity `order[i]`.
    pub order: Vec<usize>,
    pub entities: EntityStates,
}

/// Entities sorted by their mention spans (first mention first), so that the
/// network sees the same document whatever ids the input assigned.
pub fn canonical_order(doc: &Document) -> Vec<usize> {
    let offsets = doc.sentence_offsets();
    let key = |e: usize| -> Vec<(usize, usize, &str)> {
        let mut spans: Vec<(usize, usize, &str)> = doc.entities[e]
            .mentions
            .iter()
            .map(|m| {
                let base = offsets[m.sentence_index];
                (base + m.token_start, base + m.token_end, m.surface.as_str())
            })
            .collect();
        spans.sort();
        spans
    };
    let keys: Vec<_> = (0..doc.entities.len()).map(key).collect();
    let mut order: Vec<usize> = (0..doc.entities.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    order
}

/// All ordered pairs of distinct entities, lexicographic.
pub fn ordered_pairs(n_entities: usize) -> Vec<(usize, usize)> {
    (0..n_entities)
        .flat_map(|m| (0..n_entities).filter(move |&n| n != m).map(move |n| (m, n)))
        .collect()
}

/// Flattened `pairs.len() x n_relations` 0/1 label matrix.
pub fn gold_matrix(doc: &Document, pairs: &[(usize, usize)], n_relations: usize) -> Vec<f64> {
    let mut gold = vec![0.0; pairs.len() * n_relations];
    for f in &doc.facts {
        if let Ok(i) = pairs.binary_search(&(f.head, f.tail)) {
            if f.relation < n_relations {
                gold[i * n_relations + f.relation] = 1.0;
            }
        }
    }
    gold
}

fn rgcn_layers(tape: &mut Tape, params: &ParamRegistry, config: &ModelConfig, entity: bool) -> Result<Vec<RgcnLayer>, ModelError> {
    let mut out = Vec::with_capacity(config.layers);
    for l in 0..config.layers {
        let name = |part: &str| if entity { names::elg(l, part) } else { names::dlg(l, part) };
        let types: &[EdgeType] = if entity { &EdgeType::ENTITY } else { &EdgeType::DOCUMENT };
        let mut edge_weights = Vec::new();
        for &t in types {
            edge_weights.push((t, tape.param(params, &name(t.tag()))?));
        }
        out.push(RgcnLayer {
            self_weight: tape.param(params, &name("self"))?,
            edge_weights,
        });
    }
    Ok(out)
}

/// Scores every ordered pair of a document with at least two entities.
pub fn forward_document(
    tape: &mut Tape,
    doc: &Document,
    params: &ParamRegistry,
    config: &ModelConfig,
    vocab: &Vocabulary,
) -> Result<DocumentForward, ModelError> {
    match doc.entities.len() {
        0 => return Err(ModelError::EmptyDocument),
        1 => return Err(ModelError::NoPairs),
        _ => {}
    }
    let order = canonical_order(doc);
    let cdoc = doc.reorder_entities(&order);
    let ne = cdoc.entities.len();

    let h = encoder::encode(tape, &cdoc, params, vocab)?;
    let types = TypeEmbeddings {
        sentence: tape.param(params, names::TYPE_SENTENCE)?,
        mention: tape.param(params, names::TYPE_MENTION)?,
        entity: tape.param(params, names::TYPE_ENTITY)?,
    };

    // Document graph.
    let dlg = build_dlg(&cdoc)?;
    let x0 = init_dlg_states(tape, &cdoc, h, &types)?;
    let dlg_layers = rgcn_layers(tape, params, config, false)?;
    let nodes = rgcn_forward(tape, &dlg.adjacency(), x0, &dlg_layers)?;
    let e_h = pool_entity_initial(tape, &cdoc, h)?;
    let e_pre = pool_entity_pre(tape, &cdoc, nodes)?;
    let w_pre = tape.param(params, names::FUSION_PRE)?;
    let w_h = tape.param(params, names::FUSION_H)?;
    let e_dlg = fuse_dlg(tape, e_pre, e_h, w_pre, w_h, config.use_aggregation, config.per_entity_softmax)?.output;

    // Entity graph.
    let (e_elg, e_rep) = if config.use_reasoning {
        let elg = build_elg(&cdoc)?;
        let x = init_elg_states(tape, e_pre, types.entity)?;
        let elg_layers = rgcn_layers(tape, params, config, true)?;
        let e_elg = rgcn_forward(tape, &elg.adjacency(&config.entity_edge_types()), x, &elg_layers)?;
        let w_dlg = tape.param(params, names::FUSION_DLG)?;
        let w_elg = tape.param(params, names::FUSION_ELG)?;
        let rep = fuse_final(tape, e_dlg, e_elg, e_h, w_dlg, w_elg, w_h, config.per_entity_softmax)?.output;
        (Some(e_elg), rep)
    } else {
        (None, e_dlg)
    };

    // Pairs, in canonical ids.
    let cpairs = ordered_pairs(ne);
    let first: Vec<usize> = (0..ne).map(|e| cdoc.first_mention_position(e)).collect();
    let dist = tape.param(params, names::DIST_EMB)?;
    let o = pair_representations(tape, e_rep, dist, &cpairs, &first, &config.bucket_bounds)?;
    let ctx_w = tape.param(params, names::CONTEXT_W)?;
    let ctx = context_representation(tape, o, ctx_w, config.context_includes_target)?;
    let cls = ClassifierWeights {
        hidden_w: tape.param(params, names::HIDDEN_W)?,
        hidden_b: tape.param(params, names::HIDDEN_B)?,
        out_w: tape.param(params, names::OUT_W)?,
        out_b: tape.param(params, names::OUT_B)?,
    };
    let cprobs = predict_pairs(tape, o, ctx.output, &cls)?;

    // Back to the caller's entity ids.
    let mut canon_of = vec![0; ne];
    for (c, &orig) in order.iter().enumerate() {
        canon_of[orig] = c;
    }
    let pairs = ordered_pairs(ne);
    let rows: Vec<usize> = pairs
        .iter()
        .map(|&(h, t)| {
            cpairs
                .binary_search(&(canon_of[h], canon_of[t]))
                .expect("every pair is scored")
        })
        .collect();
    let probs = tape.select_rows(cprobs, &rows)?;

    Ok(DocumentForward {
        pairs,
        probs,
        order,
        entities: EntityStates {
            e_h,
            e_pre,
            e_dlg,
            e_elg,
            e_rep,
        },
    })
}

/// Summed binary cross-entropy of one document over the given rows of its
/// forward pass (all rows when `rows` is `None`).
pub fn document_loss(
    tape: &mut Tape,
    doc: &Document,
    forward: &DocumentForward,
    n_relations: usize,
    rows: Option<&[usize]>,
) -> Result<Var, ModelError> {
    let gold = gold_matrix(doc, &forward.pairs, n_relations);
    match rows {
        None => bce_loss(tape, forward.probs, &gold),
        Some(rows) => {
            let probs = tape.select_rows(forward.probs, rows)?;
            let sub: Vec<f64> = rows
                .iter()
                .flat_map(|&r| gold[r * n_relations..(r + 1) * n_relations].iter().copied())
                .collect();
            bce_loss(tape, probs, &sub)
        }
    }
}

/// A trained or freshly initialised network with its vocabulary.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub relations: Vec<String>,
    pub params: ParamRegistry,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocabulary, relations: Vec<String>) -> Result<Self, ModelError> {
        if relations.len() != config.n_relations {
            return Err(ModelError::Config(format!(
                "{} relation names for n_relations = {}",
                relations.len(),
                config.n_relations
            )));
        }
        let params = init_params(&config, vocab.len())?;
        Ok(Self {
            config,
            vocab,
            relations,
            params,
        })
    }

    pub fn forward(&self, tape: &mut Tape, doc: &Document) -> Result<DocumentForward, ModelError> {
        forward_document(tape, doc, &self.params, &self.config, &self.vocab)
    }

    /// Pair probabilities without keeping the tape: `(pairs, rows)`.
    pub fn score(&self, doc: &Document) -> Result<(Vec<(usize, usize)>, Tensor), ModelError> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, doc)?;
        Ok((f.pairs, tape.value(f.probs).clone()))
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            config_hash: self.config.hash(),
            config: self.config.clone(),
            relations: self.relations.clone(),
            vocab: self.vocab.tokens().to_vec(),
            params: ParamCheckpoint::from_registry(&self.params, self.config.hash()),
        }
    }

    pub fn from_checkpoint(ckpt: ModelCheckpoint) -> Result<Self, ModelError> {
        ckpt.config.validate()?;
        if ckpt.config.hash() != ckpt.config_hash || ckpt.params.config_hash != ckpt.config_hash {
            return Err(ModelError::Checkpoint("config hash mismatch".into()));
        }
        let vocab = Vocabulary::from_tokens(ckpt.vocab)?;
        let params = ckpt.params.to_registry()?;
        let expected = init_params(&ckpt.config, vocab.len())?;
        for (name, t) in expected.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                _ => return Err(ModelError::Checkpoint(format!("parameter `{name}` missing or misshapen"))),
            }
        }
        if params.len() != expected.len() {
            return Err(ModelError::Checkpoint("unexpected extra parameters".into()));
        }
        Model {
            config: ckpt.config,
            vocab,
            relations: ckpt.relations,
            params,
        }
        .checked()
    }

    fn checked(self) -> Result<Self, ModelError> {
        if self.relations.len() != self.config.n_relations {
            return Err(ModelError::Checkpoint("relation list does not match n_relations".into()));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub config_hash: String,
    pub config: ModelConfig,
    pub relations: Vec<String>,
    pub vocab: Vec<String>,
    pub params: ParamCheckpoint,
}

impl ModelCheckpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}
