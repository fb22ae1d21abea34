//! Walks one anchor through the truncated reverse process by hand, with an
//! oracle denoiser that knows the expert, and compares against the library
//! loop.

use cddrive::diffusion::{denoise_anchor, ddim_step, truncated_init, Denoiser, NoiseSchedule, Refinement};
use cddrive::hatna::HatnaConfig;
use cddrive::scene::{generate_scene, Difficulty};
use cddrive::traj::{headings_from_positions, PositionSequence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Always predicts the expert.
struct Oracle {
    anchor: PositionSequence,
    target: PositionSequence,
}

impl Denoiser for Oracle {
    fn refine(&self, _p_t: &PositionSequence, _z: &[f64], _t: usize) -> cddrive::Result<Refinement> {
        let delta = self.target.points.iter().zip(&self.anchor.points).map(|(t, a)| [t[0] - a[0], t[1] - a[1]]).collect();
        Ok(Refinement { delta, heading: headings_from_positions(&self.target.points) })
    }
}

fn main() -> cddrive::Result<()> {
    let sched = NoiseSchedule::default();
    let scene = generate_scene(4, Difficulty::Interactive)?;
    let target = scene.expert.positions();
    // a straight anchor at the same speed
    let anchor = PositionSequence::new((1..=8).map(|i| [target.points[7][0] * i as f64 / 8.0, 0.0]).collect())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let raw: Vec<[f64; 2]> = (0..8).map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)]).collect();
    let eps = HatnaConfig::new(8).adapt(&raw);

    let oracle = Oracle { anchor: anchor.clone(), target: target.clone() };
    let mut p = truncated_init(&sched, &anchor, &eps)?;
    println!("schedule: alpha_bar(t_tr={}) = {:.4}, steps {:?}", sched.t_truncate, sched.alpha_bar_at(sched.t_truncate), sched.reverse_steps());
    for (t, t_prev) in sched.reverse_steps() {
        let r = oracle.refine(&p, &[], t)?;
        let p0_hat = PositionSequence::new(anchor.points.iter().zip(&r.delta).map(|(a, d)| [a[0] + d[0], a[1] + d[1]]).collect())?;
        p = ddim_step(&sched, &p, &p0_hat, t, t_prev)?;
        println!("t {t} -> {t_prev}: distance to expert {:.4} m", p.squared_distance(&target).sqrt());
    }
    let (lib, _) = denoise_anchor(&sched, &oracle, &[], &anchor, &eps)?;
    println!("library loop agrees: {}", lib == p);
    Ok(())
}
