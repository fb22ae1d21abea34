//! Clusters expert trajectories into anchors and reports how well the
//! nearest anchor covers held-out experts.

use cddrive::scene::corpus::generate_corpus;
use cddrive::traj::ade;
use cddrive::vocab::{build_vocabulary_with_report, nearest_anchor};

fn main() -> cddrive::Result<()> {
    let k: usize = std::env::args().nth(1).map(|s| s.parse().expect("K")).unwrap_or(64);
    let train = generate_corpus(0, 2000, 0.5)?.scenes;
    let held = generate_corpus(1_000_000, 200, 0.5)?.scenes;
    let experts: Vec<_> = train.iter().map(|s| s.expert.clone()).collect();
    let (vocab, report) = build_vocabulary_with_report(&experts, k, 7)?;
    println!(
        "K={k}: {} iterations, converged {}, objective {:.1} -> {:.1}",
        report.iterations,
        report.converged,
        report.objective.first().copied().unwrap_or(f64::NAN),
        report.objective.last().copied().unwrap_or(f64::NAN)
    );
    let mut total = 0.0;
    for s in &held {
        total += ade(&vocab.anchors[nearest_anchor(&vocab, &s.expert)], &s.expert)?;
    }
    println!("held-out nearest-anchor ADE {:.3} m", total / held.len() as f64);
    Ok(())
}
