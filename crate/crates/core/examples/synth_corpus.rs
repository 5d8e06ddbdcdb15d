//! Generate a seeded synthetic corpus, print its statistics and one document.
//!
//!     cargo run --example synth_corpus -- [seed] [docs] [inter_fraction]

use gracr::corpus::{corpus_stats, generate_synthetic, GeneratorConfig, RelationSchema};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let docs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let inter: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.5);

    let knobs = GeneratorConfig {
        inter_fraction: inter,
        ..Default::default()
    };
    let corpus = generate_synthetic(seed, docs, &RelationSchema::numbered(4), &knobs)?;
    print!("{}", corpus_stats(&corpus));

    let doc = &corpus.documents[0];
    println!("\n{}", doc.title);
    for (i, s) in doc.sentences.iter().enumerate() {
        println!("  S{i}: {}", s.join(" "));
    }
    for f in &doc.facts {
        println!(
            "  {} --{}--> {}  evidence {:?}",
            doc.entities[f.head].name(),
            corpus.schema.names[f.relation],
            doc.entities[f.tail].name(),
            f.evidence
        );
    }
    Ok(())
}
