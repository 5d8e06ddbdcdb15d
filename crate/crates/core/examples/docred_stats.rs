//! Load a DocRED-format file and print the dataset statistics.
//!
//!     cargo run --release --example docred_stats -- train_annotated.json rel_info.json

use std::path::PathBuf;

use gracr::corpus::{corpus_stats, load_docred, load_schema, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let (Some(data), Some(schema)) = (args.next().map(PathBuf::from), args.next().map(PathBuf::from)) else {
        eprintln!("usage: docred_stats <docred.json> <rel_info.json>");
        std::process::exit(1);
    };
    let schema = load_schema(&schema)?;
    let corpus = load_docred(&data, &schema, Split::Train)?;
    print!("{}", corpus_stats(&corpus));
    Ok(())
}
