//! Score hand-written predictions against gold facts: F1, Ign F1 and the
//! intra/inter split.
//!
//!     cargo run --example metrics

use std::collections::BTreeSet;

use gracr::corpus::{tiny_document, Corpus, RelationSchema, Split};
use gracr::training::metrics::{fact_names, metrics_from_triples};

fn main() {
    let corpus = Corpus {
        documents: vec![tiny_document()],
        schema: RelationSchema::numbered(2),
        split: Split::Dev,
    };
    // Gold: Alice -r0-> Acme (same sentence), Acme -r1-> Paris (same sentence).
    let gold: BTreeSet<_> = [(0, 0, 1, 0), (0, 1, 2, 1)].into_iter().collect();
    // One hit, one miss, one spurious cross-sentence guess.
    let pred: BTreeSet<_> = [(0, 0, 1, 0), (0, 0, 2, 1)].into_iter().collect();

    // Pretend the training set already contained Alice -r0-> Acme.
    let mut train = corpus.clone();
    train.documents[0].facts.truncate(1);
    let seen = fact_names(&train);

    print!("{}", metrics_from_triples(&corpus, &gold, &pred, 0.5, Some(&seen)));
}
