//! Token encoder: learned token and position embeddings mixed over a
//! three-token window, `h_j = tanh([u_{j-1}; u_j; u_{j+1}] W + b)`.

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::{Corpus, Document};
use crate::numerics::{gaussian_init, orthogonal_init, NumericsError, ParamRegistry, Tape, Tensor, Var};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

pub const TOKEN_EMB: &str = "encoder.token_emb";
pub const POS_EMB: &str = "encoder.pos_emb";
pub const MIX_W: &str = "encoder.mix_w";
pub const MIX_B: &str = "encoder.mix_b";

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("document `{title}` has {tokens} tokens, more than max_len {max_len}")]
    TooLong {
        title: String,
        tokens: usize,
        max_len: usize,
    },
    #[error("vocabulary file line {line}: {reason}")]
    VocabFormat { line: usize, reason: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens_unchecked(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `token<TAB>id` per line, reserved ids first.
    pub fn to_tsv(&self) -> String {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{t}\t{i}\n"))
            .collect()
    }

    pub fn from_tsv(text: &str) -> Result<Self, EncoderError> {
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let bad = |reason: &str| EncoderError::VocabFormat {
                line: n + 1,
                reason: reason.into(),
            };
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| bad("expected token<TAB>id"))?;
            let id: usize = id.trim().parse().map_err(|_| bad("id is not an integer"))?;
            if id != tokens.len() {
                return Err(bad("ids must be dense and ascending"));
            }
            tokens.push(tok.to_string());
        }
        Self::from_tokens(tokens)
    }

    /// Tokens in id order; the first two must be `<pad>` and `<unk>` and no
    /// token may repeat.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, EncoderError> {
        if tokens.get(PAD).map(String::as_str) != Some(PAD_TOKEN)
            || tokens.get(UNK).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(EncoderError::VocabFormat {
                line: 1,
                reason: "reserved tokens missing".into(),
            });
        }
        let v = Self::from_tokens_unchecked(tokens);
        if v.index.len() != v.tokens.len() {
            return Err(EncoderError::VocabFormat {
                line: 0,
                reason: "duplicate token".into(),
            });
        }
        Ok(v)
    }
}

/// Tokens seen at least `min_count` times, ordered by descending frequency
/// then lexicographically, after the reserved `<pad>` and `<unk>`.
pub fn build_vocab(corpus: &Corpus, min_count: usize) -> Result<Vocabulary, EncoderError> {
    if corpus.documents.is_empty() {
        return Err(EncoderError::EmptyCorpus);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in &corpus.documents {
        for tok in doc.tokens() {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens = [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
        .into_iter()
        .chain(kept.into_iter().map(|(t, _)| t.to_string()))
        .collect();
    Ok(Vocabulary::from_tokens_unchecked(tokens))
}

/// Registers token/position embeddings (Gaussian, std 0.1), an orthogonal
/// mixer and a zero bias. `seeds` supplies one seed per tensor.
pub fn register_params(
    registry: &mut ParamRegistry,
    vocab_size: usize,
    d_w: usize,
    max_len: usize,
    seeds: &mut impl FnMut() -> u64,
) -> Result<(), NumericsError> {
    registry.insert(TOKEN_EMB, gaussian_init((vocab_size, d_w), 0.1, seeds()))?;
    registry.insert(POS_EMB, gaussian_init((max_len, d_w), 0.1, seeds()))?;
    registry.insert(MIX_W, orthogonal_init((3 * d_w, d_w), seeds()))?;
    registry.insert(MIX_B, Tensor::zeros(1, d_w))?;
    Ok(())
}

/// Hidden states `k x d_w`, one row per document token in reading order.
pub fn encode(
    tape: &mut Tape,
    doc: &Document,
    params: &ParamRegistry,
    vocab: &Vocabulary,
) -> Result<Var, EncoderError> {
    let k = doc.token_count();
    let max_len = params
        .get(POS_EMB)
        .ok_or_else(|| NumericsError::UnknownParam(POS_EMB.into()))?
        .rows();
    if k > max_len {
        return Err(EncoderError::TooLong {
            title: doc.title.clone(),
            tokens: k,
            max_len,
        });
    }
    let ids: Vec<usize> = doc.tokens().map(|t| vocab.id(t)).collect();
    let tok = tape.param(params, TOKEN_EMB)?;
    let pos = tape.param(params, POS_EMB)?;
    let w = tape.param(params, MIX_W)?;
    let b = tape.param(params, MIX_B)?;

    let tok_rows = tape.select_rows(tok, &ids)?;
    let positions: Vec<usize> = (0..k).collect();
    let pos_rows = tape.select_rows(pos, &positions)?;
    let u = tape.add(tok_rows, pos_rows)?;

    let prev: Vec<Option<usize>> = (0..k).map(|j| j.checked_sub(1)).collect();
    let next: Vec<Option<usize>> = (0..k).map(|j| (j + 1 < k).then_some(j + 1)).collect();
    let u_prev = tape.gather_rows(u, &prev)?;
    let u_next = tape.gather_rows(u, &next)?;
    let window = tape.concat_cols(&[u_prev, u, u_next])?;
    let mixed = tape.matmul(window, w)?;
    let biased = tape.add_row(mixed, b)?;
    Ok(tape.tanh(biased)?)
}
