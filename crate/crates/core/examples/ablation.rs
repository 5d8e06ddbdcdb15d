//! Train the full model and its ablated variants on a small bridge-heavy
//! synthetic corpus and print the comparison table.
//!
//!     cargo run --release --example ablation -- [seed] [epochs]

use gracr::corpus::{generate_synthetic, GeneratorConfig, RelationSchema};
use gracr::model::ModelConfig;
use gracr::training::{ablation_run, standard_variants, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);

    let schema = RelationSchema::numbered(4);
    let knobs = GeneratorConfig {
        inter_fraction: 0.8,
        ..Default::default()
    };
    let train = generate_synthetic(seed, 40, &schema, &knobs)?;
    let dev = generate_synthetic(seed + 1000, 12, &schema, &knobs)?;

    let model = ModelConfig {
        n_relations: schema.count(),
        seed,
        ..Default::default()
    };
    let train_cfg = TrainConfig {
        epochs,
        seed,
        ..Default::default()
    };
    let table = ablation_run(&train, &dev, &model, &train_cfg, &standard_variants())?;
    print!("{table}");
    Ok(())
}
