//! Shows what the horizon-aware adapter does to white noise: the scale
//! profile, per-waypoint spread and the roughness of the result.

use cddrive::hatna::HatnaConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let n = 8;
    let h = HatnaConfig::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!("kernel  {:?}", h.kernel().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("profile {:?}", h.scale_profile().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());

    let samples = 5000;
    let mut spread = vec![0.0; n];
    let (mut rough_raw, mut rough_adapted) = (0.0, 0.0);
    for _ in 0..samples {
        let raw: Vec<[f64; 2]> = (0..n).map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)]).collect();
        let out = h.adapt(&raw);
        for (s, p) in spread.iter_mut().zip(&out) {
            *s += p[0] * p[0] + p[1] * p[1];
        }
        rough_raw += second_difference(&raw);
        rough_adapted += second_difference(&out);
    }
    let rms: Vec<String> = spread.iter().map(|s| format!("{:.3}", (s / samples as f64).sqrt())).collect();
    println!("rms per waypoint {rms:?}");
    println!(
        "mean |second difference| raw {:.3}, adapted {:.3}",
        rough_raw / samples as f64,
        rough_adapted / samples as f64
    );
}

fn second_difference(p: &[[f64; 2]]) -> f64 {
    p.windows(3)
        .map(|w| (w[2][0] - 2.0 * w[1][0] + w[0][0]).hypot(w[2][1] - 2.0 * w[1][1] + w[0][1]))
        .sum::<f64>()
        / (p.len() - 2) as f64
}
