//! Seeded synthetic documents with planted, surface-recoverable facts.
//!
//! An intra-sentence fact `(a, b, r)` is written as `a rel{r} b`. An
//! inter-sentence fact goes through a bridge entity `k` in two sentences,
//! `a via{r} k` and `k bridge b`, and `a` and `b` never share a sentence.
//! Extra sentences mention single entities or unrelated pairs (`x and y`).

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Document, Entity, Mention, RelationFact, RelationSchema, Split};

const NAMES: &[&str] = &[
    "Alvor", "Brenna", "Cadmus", "Dorrin", "Elsbet", "Fennick", "Galdor", "Hestia", "Ivarn", "Jorund",
    "Kelda", "Lunet", "Morrow", "Nessa", "Orrin", "Perrin", "Quillon", "Roswen", "Sabel", "Tarvik",
    "Ulric", "Vesna", "Wendal", "Xaria", "Yorick", "Zelda", "Ambrose", "Belisar", "Corwin", "Delphine",
    "Eamon", "Fiora", "Gideon", "Halvard", "Isolde", "Jasper", "Katrin", "Lorcan", "Maelis", "Nolwen",
    "Osric", "Pellam", "Rhosyn", "Seren", "Tamsin", "Urien", "Vaughn", "Wystan", "Ysolde", "Zennor",
];
const SUFFIXES: &[&str] = &["City", "Group", "River", "Institute"];
const FILLERS: &[&str] = &[
    "the", "of", "in", "was", "near", "old", "new", "large", "north", "during", "also", "then",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub entities_per_doc: usize,
    pub facts_per_doc: usize,
    /// Probability that a planted fact is bridge-mediated (inter-sentence).
    pub inter_fraction: f64,
    /// Minimum sentence count; documents are padded with distractor sentences.
    pub sentences_per_doc: usize,
    /// Filler tokens before and after the core of each sentence, uniform in `0..=max_filler`.
    pub max_filler: usize,
    /// Probability that an entity name gets a second token.
    pub two_token_names: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            entities_per_doc: 6,
            facts_per_doc: 3,
            inter_fraction: 0.5,
            sentences_per_doc: 5,
            max_filler: 2,
            two_token_names: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
enum Slot {
    Word(String),
    Ent(usize),
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

struct DocBuilder<'a> {
    rng: &'a mut ChaCha8Rng,
    cfg: &'a GeneratorConfig,
    sentences: Vec<Vec<Slot>>,
    cooccur: HashSet<(usize, usize)>,
    inter_pairs: HashSet<(usize, usize)>,
}

impl DocBuilder<'_> {
    fn fillers(&mut self) -> Vec<Slot> {
        let n = self.rng.random_range(0..=self.cfg.max_filler);
        (0..n)
            .map(|_| Slot::Word(FILLERS.choose(self.rng).expect("nonempty").to_string()))
            .collect()
    }

    fn sentence(&mut self, core: Vec<Slot>) -> usize {
        let ents: Vec<usize> = core
            .iter()
            .filter_map(|s| match s {
                Slot::Ent(e) => Some(*e),
                Slot::Word(_) => None,
            })
            .collect();
        for (i, &a) in ents.iter().enumerate() {
            for &b in &ents[i + 1..] {
                if a != b {
                    self.cooccur.insert(key(a, b));
                }
            }
        }
        let mut s = self.fillers();
        s.extend(core);
        s.extend(self.fillers());
        s.push(Slot::Word(".".into()));
        self.sentences.push(s);
        self.sentences.len() - 1
    }
}

/// Deterministic in `(seed, n_docs, schema, knobs)`.
pub fn generate_synthetic(
    seed: u64,
    n_docs: usize,
    schema: &RelationSchema,
    knobs: &GeneratorConfig,
) -> Result<Corpus, CorpusError> {
    if n_docs == 0 {
        return Err(CorpusError::InvalidArgument("n_docs must be at least 1".into()));
    }
    if schema.count() == 0 {
        return Err(CorpusError::InvalidArgument("schema has no relations".into()));
    }
    if !(0.0..=1.0).contains(&knobs.inter_fraction) || !(0.0..=1.0).contains(&knobs.two_token_names) {
        return Err(CorpusError::InvalidArgument("fractions must lie in [0, 1]".into()));
    }
    if knobs.entities_per_doc < 2 || knobs.entities_per_doc > NAMES.len() {
        return Err(CorpusError::InvalidArgument(format!(
            "entities_per_doc must be in 2..={}",
            NAMES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let documents = (0..n_docs)
        .map(|i| generate_document(&mut rng, format!("synthetic-{seed}-{i}"), schema.count(), knobs))
        .collect();
    let corpus = Corpus {
        documents,
        schema: schema.clone(),
        split: Split::Train,
    };
    corpus.validate()?;
    Ok(corpus)
}

fn generate_document(rng: &mut ChaCha8Rng, title: String, n_relations: usize, cfg: &GeneratorConfig) -> Document {
    let n_ent = cfg.entities_per_doc;
    let names: Vec<Vec<String>> = NAMES
        .choose_multiple(rng, n_ent)
        .map(|first| {
            let mut name = vec![first.to_string()];
            if rng.random_bool(cfg.two_token_names) {
                name.push(SUFFIXES.choose(rng).expect("nonempty").to_string());
            }
            name
        })
        .collect();

    let mut b = DocBuilder {
        rng,
        cfg,
        sentences: Vec::new(),
        cooccur: HashSet::new(),
        inter_pairs: HashSet::new(),
    };
    let mut facts: Vec<(RelationFact, Vec<usize>)> = Vec::new();
    let mut planted: HashSet<(usize, usize, usize)> = HashSet::new();

    for _ in 0..cfg.facts_per_doc {
        let inter = n_ent >= 3 && b.rng.random_bool(cfg.inter_fraction);
        for _attempt in 0..64 {
            let r = b.rng.random_range(0..n_relations);
            if inter {
                let picks: Vec<usize> = rand::seq::index::sample(b.rng, n_ent, 3).into_vec();
                let (a, t, k) = (picks[0], picks[1], picks[2]);
                if planted.contains(&(a, t, r))
                    || b.cooccur.contains(&key(a, t))
                    || b.inter_pairs.contains(&key(a, k))
                    || b.inter_pairs.contains(&key(k, t))
                {
                    continue;
                }
                b.inter_pairs.insert(key(a, t));
                let s1 = b.sentence(vec![Slot::Ent(a), Slot::Word(format!("via{r}")), Slot::Ent(k)]);
                let s2 = b.sentence(vec![Slot::Ent(k), Slot::Word("bridge".into()), Slot::Ent(t)]);
                planted.insert((a, t, r));
                facts.push((fact(a, t, r), vec![s1, s2]));
            } else {
                let picks: Vec<usize> = rand::seq::index::sample(b.rng, n_ent, 2).into_vec();
                let (a, t) = (picks[0], picks[1]);
                if planted.contains(&(a, t, r)) || b.inter_pairs.contains(&key(a, t)) {
                    continue;
                }
                let s = b.sentence(vec![Slot::Ent(a), Slot::Word(format!("rel{r}")), Slot::Ent(t)]);
                planted.insert((a, t, r));
                facts.push((fact(a, t, r), vec![s]));
            }
            break;
        }
    }

    let mut mentioned = vec![false; n_ent];
    for s in &b.sentences {
        for slot in s {
            if let Slot::Ent(e) = slot {
                mentioned[*e] = true;
            }
        }
    }
    for (e, seen) in mentioned.iter().enumerate() {
        if !seen {
            b.sentence(vec![Slot::Ent(e)]);
        }
    }
    let mut guard = 0;
    while b.sentences.len() < cfg.sentences_per_doc && guard < 256 {
        guard += 1;
        let picks: Vec<usize> = rand::seq::index::sample(b.rng, n_ent, 2).into_vec();
        let (x, y) = (picks[0], picks[1]);
        if b.rng.random_bool(0.5) && !b.inter_pairs.contains(&key(x, y)) {
            b.sentence(vec![Slot::Ent(x), Slot::Word("and".into()), Slot::Ent(y)]);
        } else {
            b.sentence(vec![Slot::Ent(x)]);
        }
    }

    let mut order: Vec<usize> = (0..b.sentences.len()).collect();
    order.shuffle(b.rng);
    let mut position_of = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        position_of[old] = new;
    }

    let mut sentences = Vec::with_capacity(order.len());
    let mut mentions: Vec<Vec<Mention>> = vec![Vec::new(); n_ent];
    for (s_idx, &old) in order.iter().enumerate() {
        let mut tokens = Vec::new();
        for slot in &b.sentences[old] {
            match slot {
                Slot::Word(w) => tokens.push(w.clone()),
                Slot::Ent(e) => {
                    let start = tokens.len();
                    tokens.extend(names[*e].iter().cloned());
                    mentions[*e].push(Mention {
                        sentence_index: s_idx,
                        token_start: start,
                        token_end: tokens.len(),
                        surface: names[*e].join(" "),
                    });
                }
            }
        }
        sentences.push(tokens);
    }
    for m in &mut mentions {
        m.sort_by_key(|x| x.span());
    }

    Document {
        title,
        sentences,
        entities: mentions
            .into_iter()
            .enumerate()
            .map(|(entity_id, mentions)| Entity { entity_id, mentions })
            .collect(),
        facts: facts
            .into_iter()
            .map(|(mut f, evidence)| {
                let mut ev: Vec<usize> = evidence.iter().map(|&s| position_of[s]).collect();
                ev.sort_unstable();
                f.evidence = Some(ev);
                f
            })
            .collect(),
    }
}

fn fact(head: usize, tail: usize, relation: usize) -> RelationFact {
    RelationFact {
        head,
        tail,
        relation,
        evidence: None,
    }
}
