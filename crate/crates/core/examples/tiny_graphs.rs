//! Build both graphs for the two-sentence demo document and explain every
//! entity pair.
//!
//!     cargo run --example tiny_graphs

use gracr::corpus::tiny_document;
use gracr::graphs::{build_dlg, build_elg, explain_pair, EdgeType};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let doc = tiny_document();
    for (i, s) in doc.sentences.iter().enumerate() {
        println!("S{i}: {}", s.join(" "));
    }

    let dlg = build_dlg(&doc)?;
    println!("\nmention/sentence graph: {} nodes", dlg.nodes().len());
    for t in [EdgeType::MentionMention, EdgeType::MentionSentence, EdgeType::SentenceSentence] {
        let edges: Vec<String> = dlg.edges_of(t).map(|e| format!("{}-{}", e.a, e.b)).collect();
        println!("  {:<3} {}", t.tag(), edges.join(" "));
    }

    let elg = build_elg(&doc)?;
    println!("\nentity graph");
    for t in [EdgeType::Intra, EdgeType::Logic] {
        let edges: Vec<String> = elg.edges_of(t).map(|e| format!("{}-{}", e.a, e.b)).collect();
        println!("  {:<5} {}", t.tag(), edges.join(" "));
    }

    println!();
    for h in 0..doc.entities.len() {
        for t in h + 1..doc.entities.len() {
            print!("{}", explain_pair(&doc, h, t)?.render(&doc));
        }
    }
    Ok(())
}
