//! Finite-difference check of the full training loss on the demo document,
//! with the default model configuration.
//!
//!     cargo run --release --example gradcheck

use gracr::corpus::{tiny_document, Corpus, RelationSchema, Split};
use gracr::encoder::build_vocab;
use gracr::model::{document_loss, forward_document, Model, ModelConfig, ModelError};
use gracr::numerics::{finite_difference_check, GradCheckOptions, ParamRegistry, Tape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let doc = tiny_document();
    let corpus = Corpus {
        documents: vec![doc.clone()],
        schema: RelationSchema::numbered(2),
        split: Split::Train,
    };
    let config = ModelConfig {
        n_relations: 2,
        ..Default::default()
    };
    let vocab = build_vocab(&corpus, 1)?;
    let mut model = Model::new(config.clone(), vocab.clone(), corpus.schema.names.clone())?;

    let report = finite_difference_check(
        |tape: &mut Tape, reg: &ParamRegistry| {
            let f = forward_document(tape, &doc, reg, &config, &vocab)?;
            document_loss(tape, &doc, &f, config.n_relations, None)
        },
        &mut model.params,
        GradCheckOptions::default(),
    )
    .map_err(|e: ModelError| e)?;

    for p in &report.per_param {
        println!("{:<22} {:>4} coords  {:>2} at kinks  {:.2e}", p.name, p.checked, p.kinks_skipped, p.max_rel_error);
    }
    println!(
        "max relative error {:.2e} over {} coordinates; {} skipped because the step crossed a ReLU or clip boundary",
        report.max_rel_error, report.checked, report.kinks_skipped
    );
    Ok(())
}
