//! Memorise a 20-document synthetic corpus and report training-set F1 at the
//! tuned threshold.
//!
//!     cargo run --release --example overfit -- [epochs]

use std::time::Instant;

use gracr::corpus::{generate_synthetic, GeneratorConfig, RelationSchema};
use gracr::model::ModelConfig;
use gracr::training::{score_corpus, train_with, tune_threshold, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let schema = RelationSchema::numbered(4);
    let corpus = generate_synthetic(7, 20, &schema, &GeneratorConfig::default())?;
    let model_cfg = ModelConfig {
        n_relations: 4,
        ..Default::default()
    };
    let train_cfg = TrainConfig {
        epochs,
        ..Default::default()
    };
    let start = Instant::now();
    let out = train_with(&corpus, &corpus, &model_cfg, &train_cfg, |e| {
        if e.epoch % 10 == 0 || e.epoch == 1 {
            println!(
                "epoch {:>3}  loss {:>9.4}  train F1 {:.4} @ {:.2}",
                e.epoch, e.train_loss, e.dev_f1, e.dev_threshold
            );
        }
    })?;
    let scores = score_corpus(&out.model, &corpus)?;
    let (threshold, f1) = tune_threshold(&corpus, &scores, 0.01)?;
    println!(
        "best epoch {}  train F1 {f1:.4} at threshold {threshold:.2}  ({:.1}s)",
        out.best_epoch,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
