//! Trains a small planner for a few hundred steps, prints the loss curve
//! and saves the checkpoint and vocabulary.
//!
//!     cargo run --release --example train_small -- 400 /tmp/small

use cddrive::config::RunConfig;
use cddrive::scene::corpus::generate_corpus;
use cddrive::train::train;
use cddrive::vocab::build_vocabulary;

fn main() -> cddrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map(|s| s.parse().expect("steps")).unwrap_or(300);
    let out = args.next().unwrap_or_else(|| "small".into());

    let mut cfg = RunConfig::default();
    cfg.data.vocab_size = 32;
    cfg.model.hidden = 64;
    cfg.train.steps = steps;
    cfg.train.learning_rate = 3e-3;
    cfg.train.log_every = 50;

    let scenes = generate_corpus(0, 400, 0.5)?.scenes;
    let experts: Vec<_> = scenes.iter().map(|s| s.expert.clone()).collect();
    let vocab = build_vocabulary(&experts, cfg.data.vocab_size, cfg.data.vocab_seed)?;
    let ckpt = train(&cfg, &scenes, &vocab, |r| {
        println!(
            "step {:4}  lr {:.2e}  total {:.4}  traj {:.4}  im {:.4}  sim {:.4}  bev {:.4}",
            r.step, r.lr, r.total, r.traj, r.im, r.sim, r.bev
        );
        Ok(())
    })?;
    ckpt.save(format!("{out}.ckpt.json"))?;
    vocab.save(format!("{out}.vocab.json"))?;
    println!("saved {out}.ckpt.json (config {})", ckpt.config_hash);
    Ok(())
}
