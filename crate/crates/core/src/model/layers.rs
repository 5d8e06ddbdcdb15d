//! Differentiable building blocks of the network. Every function records its
//! work on the caller's tape and takes weights as tape handles, so each block
//! can be exercised with hand-set matrices.

use crate::corpus::Document;
use crate::graphs::{EdgeType, RelationalAdjacency};
use crate::numerics::{Tape, Tensor, Var};

use super::ModelError;

/// Node-type vectors `t_s`, `t_m`, `t_e`, each `1 x d_t`.
#[derive(Debug, Clone, Copy)]
pub struct TypeEmbeddings {
    pub sentence: Var,
    pub mention: Var,
    pub entity: Var,
}

#[derive(Debug, Clone)]
pub struct RgcnLayer {
    pub self_weight: Var,
    pub edge_weights: Vec<(EdgeType, Var)>,
}

/// Averaging matrix with one row per document-graph node (sentences, then
/// mentions by global id) and one column per token.
pub fn node_pool_matrix(doc: &Document) -> Tensor {
    let k = doc.token_count();
    let offsets = doc.sentence_offsets();
    let spans: Vec<(usize, usize)> = doc
        .sentences
        .iter()
        .enumerate()
        .map(|(s, toks)| (offsets[s], offsets[s] + toks.len()))
        .chain(doc.entities.iter().flat_map(|e| {
            e.mentions.iter().map(|m| {
                let base = offsets[m.sentence_index];
                (base + m.token_start, base + m.token_end)
            })
        }))
        .collect();
    let mut pool = Tensor::zeros(spans.len(), k);
    for (row, &(start, end)) in spans.iter().enumerate() {
        let w = 1.0 / (end - start) as f64;
        for col in start..end {
            pool.set(row, col, w);
        }
    }
    pool
}

/// Global mention ids of each entity.
pub fn entity_mention_ids(doc: &Document) -> Vec<Vec<usize>> {
    let mut next = 0;
    doc.entities
        .iter()
        .map(|e| {
            let ids = (next..next + e.mentions.len()).collect();
            next += e.mentions.len();
            ids
        })
        .collect()
}

/// Span means of `h` for every sentence and mention, `(S + M) x d_w`.
pub fn node_contents(tape: &mut Tape, doc: &Document, h: Var) -> Result<Var, ModelError> {
    if tape.value(h).rows() != doc.token_count() {
        return Err(ModelError::Config(format!(
            "hidden states have {} rows for {} tokens",
            tape.value(h).rows(),
            doc.token_count()
        )));
    }
    let pool = tape.constant(node_pool_matrix(doc))?;
    Ok(tape.matmul(pool, h)?)
}

/// Document-graph node features: `[span mean; t_s]` for sentences followed
/// by `[span mean; t_m]` for mentions.
pub fn init_dlg_states(
    tape: &mut Tape,
    doc: &Document,
    h: Var,
    types: &TypeEmbeddings,
) -> Result<Var, ModelError> {
    let content = node_contents(tape, doc, h)?;
    let s = doc.sentences.len();
    let table = tape.concat_rows(&[types.sentence, types.mention])?;
    let idx: Vec<usize> = (0..s).map(|_| 0).chain((0..doc.mention_count()).map(|_| 1)).collect();
    let type_rows = tape.select_rows(table, &idx)?;
    Ok(tape.concat_cols(&[content, type_rows])?)
}

/// `L` rounds of `n_i <- relu(n_i W_0 + sum_x mean_{j in N_x(i)} n_j W_x)`.
pub fn rgcn_forward(
    tape: &mut Tape,
    adjacency: &RelationalAdjacency,
    states: Var,
    layers: &[RgcnLayer],
) -> Result<Var, ModelError> {
    if tape.value(states).rows() != adjacency.node_count {
        return Err(ModelError::Config(format!(
            "{} node states for {} graph nodes",
            tape.value(states).rows(),
            adjacency.node_count
        )));
    }
    let mut x = states;
    for layer in layers {
        let mut acc = tape.matmul(x, layer.self_weight)?;
        for (edge_type, lists) in &adjacency.per_type {
            let weight = layer
                .edge_weights
                .iter()
                .find(|(t, _)| t == edge_type)
                .map(|(_, w)| *w)
                .ok_or(ModelError::MissingEdgeWeight(*edge_type))?;
            if lists.iter().all(Vec::is_empty) {
                continue;
            }
            let agg = tape.neighbor_mean(x, lists.clone())?;
            let msg = tape.matmul(agg, weight)?;
            acc = tape.add(acc, msg)?;
        }
        x = tape.relu(acc)?;
    }
    Ok(x)
}

/// Log-sum-exp over each group of rows, one output row per group.
pub fn pool_groups(tape: &mut Tape, rows: Var, groups: &[Vec<usize>]) -> Result<Var, ModelError> {
    if groups.is_empty() {
        return Err(ModelError::EmptyDocument);
    }
    let mut pooled = Vec::with_capacity(groups.len());
    for g in groups {
        let sel = tape.select_rows(rows, g)?;
        pooled.push(tape.logsumexp_rows(sel)?);
    }
    Ok(tape.concat_rows(&pooled)?)
}

/// Entity embeddings from encoder states: log-sum-exp over mention means.
pub fn pool_entity_initial(tape: &mut Tape, doc: &Document, h: Var) -> Result<Var, ModelError> {
    let content = node_contents(tape, doc, h)?;
    let s = doc.sentences.len();
    let mention_rows: Vec<usize> = (s..s + doc.mention_count()).collect();
    let means = tape.select_rows(content, &mention_rows)?;
    pool_groups(tape, means, &entity_mention_ids(doc))
}

/// Entity embeddings from convolved document-graph states (mention rows follow
/// the sentence rows).
pub fn pool_entity_pre(tape: &mut Tape, doc: &Document, node_states: Var) -> Result<Var, ModelError> {
    let s = doc.sentences.len();
    let groups: Vec<Vec<usize>> = entity_mention_ids(doc)
        .into_iter()
        .map(|g| g.into_iter().map(|m| s + m).collect())
        .collect();
    pool_groups(tape, node_states, &groups)
}

/// Output and weight matrix of an attention step.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub output: Var,
    pub weights: Var,
}

/// `softmax(Q K^T / sqrt(d)) V` with the softmax over all rows of `K`.
/// With `per_entity` each query attends only to its own key, which is a
/// softmax over one score and therefore returns `V` unchanged.
pub fn attend(tape: &mut Tape, q: Var, k: Var, v: Var, per_entity: bool) -> Result<Attention, ModelError> {
    let n = tape.value(q).rows();
    if n == 0 {
        return Err(ModelError::EmptyDocument);
    }
    if per_entity {
        let weights = tape.constant(Tensor::identity(n))?;
        return Ok(Attention { output: v, weights });
    }
    let d = tape.value(q).cols() as f64;
    let kt = tape.transpose(k)?;
    let raw = tape.matmul(q, kt)?;
    let scores = tape.scale(raw, 1.0 / d.sqrt())?;
    let weights = tape.row_softmax(scores)?;
    let output = tape.matmul(weights, v)?;
    Ok(Attention { output, weights })
}

/// Fuses convolved and initial entity information: queries `E_pre W_pre`,
/// keys and values `E_h W_h`. Without aggregation the result is the query
/// projection itself.
pub fn fuse_dlg(
    tape: &mut Tape,
    e_pre: Var,
    e_h: Var,
    w_pre: Var,
    w_h: Var,
    use_aggregation: bool,
    per_entity: bool,
) -> Result<Attention, ModelError> {
    if tape.value(e_pre).rows() != tape.value(e_h).rows() {
        return Err(ModelError::Config("entity row counts differ".into()));
    }
    let q = tape.matmul(e_pre, w_pre)?;
    if !use_aggregation {
        let weights = tape.constant(Tensor::identity(tape.value(q).rows()))?;
        return Ok(Attention { output: q, weights });
    }
    let kv = tape.matmul(e_h, w_h)?;
    attend(tape, q, kv, kv, per_entity)
}

/// Entity-graph node features `[e_pre; t_e]`.
pub fn init_elg_states(tape: &mut Tape, e_pre: Var, t_e: Var) -> Result<Var, ModelError> {
    let n = tape.value(e_pre).rows();
    let type_rows = tape.select_rows(t_e, &vec![0; n])?;
    Ok(tape.concat_cols(&[e_pre, type_rows])?)
}

/// Final entity representation: queries `E_Dlg W_dlg`, keys `E_Elg W_elg`,
/// values `E_h W_h`.
#[allow(clippy::too_many_arguments)]
pub fn fuse_final(
    tape: &mut Tape,
    e_dlg: Var,
    e_elg: Var,
    e_h: Var,
    w_dlg: Var,
    w_elg: Var,
    w_h: Var,
    per_entity: bool,
) -> Result<Attention, ModelError> {
    let n = tape.value(e_dlg).rows();
    if tape.value(e_elg).rows() != n || tape.value(e_h).rows() != n {
        return Err(ModelError::Config("entity row counts differ".into()));
    }
    let q = tape.matmul(e_dlg, w_dlg)?;
    let k = tape.matmul(e_elg, w_elg)?;
    let v = tape.matmul(e_h, w_h)?;
    attend(tape, q, k, v, per_entity)
}

/// Signed bucket of a token offset. `bounds[i]` is the largest magnitude in
/// bucket `i`; magnitudes above the last bound share bucket `bounds.len()`.
pub fn distance_bucket(delta: i64, bounds: &[u64]) -> i64 {
    let mag = delta.unsigned_abs();
    let bucket = bounds.iter().position(|&b| mag <= b).unwrap_or(bounds.len()) as i64;
    if delta < 0 {
        -bucket
    } else {
        bucket
    }
}

/// Row of the distance embedding table holding `bucket`.
pub fn bucket_row(bucket: i64, bounds: &[u64]) -> usize {
    (bucket + bounds.len() as i64) as usize
}

/// `[e_m; d(m->n); e_n; d(n->m)]` for every listed ordered pair, `p x d_r`.
/// `first_pos[e]` is the document position of entity `e`'s first mention.
pub fn pair_representations(
    tape: &mut Tape,
    e_rep: Var,
    dist_emb: Var,
    pairs: &[(usize, usize)],
    first_pos: &[usize],
    bounds: &[u64],
) -> Result<Var, ModelError> {
    let n = tape.value(e_rep).rows();
    for &(m, k) in pairs {
        if m == k {
            return Err(ModelError::SameEntity(m));
        }
        if m.max(k) >= n || m.max(k) >= first_pos.len() {
            return Err(ModelError::EntityOutOfRange(m.max(k)));
        }
    }
    let heads: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let tails: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let forward: Vec<usize> = pairs
        .iter()
        .map(|&(m, k)| bucket_row(distance_bucket(first_pos[k] as i64 - first_pos[m] as i64, bounds), bounds))
        .collect();
    let backward: Vec<usize> = pairs
        .iter()
        .map(|&(m, k)| bucket_row(distance_bucket(first_pos[m] as i64 - first_pos[k] as i64, bounds), bounds))
        .collect();
    let em = tape.select_rows(e_rep, &heads)?;
    let dm = tape.select_rows(dist_emb, &forward)?;
    let en = tape.select_rows(e_rep, &tails)?;
    let dn = tape.select_rows(dist_emb, &backward)?;
    Ok(tape.concat_cols(&[em, dm, en, dn])?)
}

/// Context vectors for every pair at once: row `r` of the result is
/// `sum_i theta_ri o_i` with `theta_r = softmax_i(o_i W o_r^T)`. Returns the
/// context matrix and the weights (row `r` holds `theta_r`).
pub fn context_representation(
    tape: &mut Tape,
    pairs: Var,
    w: Var,
    include_target: bool,
) -> Result<Attention, ModelError> {
    let p = tape.value(pairs).rows();
    if p == 0 {
        return Err(ModelError::NoPairs);
    }
    if !include_target && p == 1 {
        // Nothing left to attend to.
        let d = tape.value(pairs).cols();
        let output = tape.constant(Tensor::zeros(1, d))?;
        let weights = tape.constant(Tensor::zeros(1, 1))?;
        return Ok(Attention { output, weights });
    }
    let ow = tape.matmul(pairs, w)?;
    let owt = tape.transpose(ow)?;
    let mut scores = tape.matmul(pairs, owt)?;
    if !include_target {
        let mut mask = Tensor::zeros(p, p);
        for i in 0..p {
            mask.set(i, i, -1e30);
        }
        let mask = tape.constant(mask)?;
        scores = tape.add(scores, mask)?;
    }
    let weights = tape.row_softmax(scores)?;
    let output = tape.matmul(weights, pairs)?;
    Ok(Attention { output, weights })
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifierWeights {
    pub hidden_w: Var,
    pub hidden_b: Var,
    pub out_w: Var,
    pub out_b: Var,
}

/// `sigmoid(relu([o_r; o_c] W_1 + b_1) W_2 + b_2)`, one row per pair.
pub fn predict_pairs(
    tape: &mut Tape,
    o_r: Var,
    o_c: Var,
    cls: &ClassifierWeights,
) -> Result<Var, ModelError> {
    let x = tape.concat_cols(&[o_r, o_c])?;
    let hidden = tape.matmul(x, cls.hidden_w)?;
    let hidden = tape.add_row(hidden, cls.hidden_b)?;
    let hidden = tape.relu(hidden)?;
    let logits = tape.matmul(hidden, cls.out_w)?;
    let logits = tape.add_row(logits, cls.out_b)?;
    Ok(tape.sigmoid(logits)?)
}

/// Summed clipped binary cross-entropy.
pub fn bce_loss(tape: &mut Tape, probs: Var, gold: &[f64]) -> Result<Var, ModelError> {
    Ok(tape.bce(probs, gold)?)
}
