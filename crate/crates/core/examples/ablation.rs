//! Reduced ablation: HATNA diffusion, plain diffusion and regression
//! refinement trained on the same data and compared on held-out scenes.
//! Takes the training step count; the full-size run is `cddrive ablate`.

use cddrive::ablate::{run_ablation, standard_variants};
use cddrive::config::RunConfig;
use cddrive::decision::Mode;
use cddrive::scene::corpus::generate_corpus;
use cddrive::vocab::build_vocabulary;

fn main() -> cddrive::Result<()> {
    let steps: usize = std::env::args().nth(1).map(|s| s.parse().expect("steps")).unwrap_or(300);
    let mut cfg = RunConfig::default();
    cfg.data.vocab_size = 32;
    cfg.model.hidden = 64;
    cfg.train.steps = steps;
    cfg.train.learning_rate = 3e-3;

    let train = generate_corpus(0, 500, 0.5)?.scenes;
    let held = generate_corpus(1_000_000, 200, 0.5)?.scenes;
    let experts: Vec<_> = train.iter().map(|s| s.expert.clone()).collect();
    let vocab = build_vocabulary(&experts, cfg.data.vocab_size, cfg.data.vocab_seed)?;
    let (report, _) = run_ablation(&cfg, &standard_variants(), &train, &held, &vocab, 1, |_, _| Ok(()))?;

    for v in &report.variants {
        println!("{} (final loss {:.4})", v.variant.name, v.final_loss.unwrap_or(f64::NAN));
        for m in Mode::ALL {
            if let Some(r) = v.mode(m) {
                let ade = r.refined_min_ade.map(|s| format!("{:.3}", s.interactive)).unwrap_or_else(|| "-".into());
                let kink = r.refined_kink.map(|k| format!("{k:.4}")).unwrap_or_else(|| "-".into());
                println!("  {:>14?}  pdms {:.4}  comf {:.4}  interactive min ADE {ade}  kink {kink}", m, r.pdms.all, r.submetrics.comf);
            }
        }
    }
    for t in &report.trends {
        println!("{} {}: {}", if t.passed { "PASS" } else { "FAIL" }, t.name, t.detail);
    }
    Ok(())
}
