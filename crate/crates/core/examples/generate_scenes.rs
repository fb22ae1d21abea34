//! Generates a small corpus, checks that every expert scores a perfect
//! PDMS and writes it as JSONL.
//!
//!     cargo run --example generate_scenes -- /tmp/scenes.jsonl

use cddrive::scene::corpus::generate_corpus;
use cddrive::scene::{evaluate_submetrics, pdms, Difficulty};

fn main() -> cddrive::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "scenes.jsonl".into());
    let corpus = generate_corpus(0, 200, 0.5)?;
    let interactive = corpus.scenes.iter().filter(|s| s.difficulty == Difficulty::Interactive).count();
    let mut worst: f64 = 1.0;
    for s in &corpus.scenes {
        worst = worst.min(pdms(&evaluate_submetrics(s, &s.expert)?));
    }
    let agents: usize = corpus.scenes.iter().map(|s| s.agents.len()).sum();
    println!("{} scenes, {interactive} interactive, {agents} agents", corpus.scenes.len());
    println!("lowest expert pdms {worst}");
    corpus.write(&out)?;
    println!("wrote {out}");
    Ok(())
}
