//! Loads a checkpoint written by `train_small`, shows one unified decision
//! in detail and evaluates all three candidate modes on held-out scenes.
//!
//!     cargo run --release --example decide_and_evaluate -- /tmp/small

use cddrive::decision::{aggregate, evaluate, plan_scene, Mode};
use cddrive::planner::Checkpoint;
use cddrive::scene::corpus::generate_corpus;
use cddrive::scene::{evaluate_submetrics, pdms};
use cddrive::vocab::Vocabulary;

fn main() -> cddrive::Result<()> {
    let prefix = std::env::args().nth(1).unwrap_or_else(|| "small".into());
    let ckpt = Checkpoint::load(format!("{prefix}.ckpt.json"))?;
    let vocab = Vocabulary::load(format!("{prefix}.vocab.json"))?;
    let w = ckpt.config.score_weights;
    let held = generate_corpus(1_000_000, 100, 0.5)?.scenes;

    let scene = &held[1];
    let d = plan_scene(Mode::Unified, &vocab, &ckpt.planner, scene, &w, 1)?;
    let mut ranked: Vec<usize> = (0..d.scores.len()).collect();
    ranked.sort_by(|&a, &b| aggregate(&d.scores[b], &w).total_cmp(&aggregate(&d.scores[a], &w)));
    println!("scene {} ({:?}), top candidates:", scene.rng_seed, scene.difficulty);
    for &i in ranked.iter().take(5) {
        let truth = pdms(&evaluate_submetrics(scene, d.set.get(i))?);
        println!("  #{i:3} {:?}  score {:.3}  true pdms {truth:.3}", d.set.provenance(i), aggregate(&d.scores[i], &w));
    }
    println!("chosen #{} ({:?})", d.index, d.set.provenance(d.index));

    let report = evaluate(&held, &Mode::ALL, &ckpt.planner, &vocab, &w, 1, &ckpt.config_hash)?;
    for m in &report.modes {
        println!(
            "{:>14?}: pdms {:.4} (routine {:.4}, interactive {:.4}), decided ADE {:.3}",
            m.mode, m.pdms.all, m.pdms.routine, m.pdms.interactive, m.decided_ade.all
        );
    }
    Ok(())
}
