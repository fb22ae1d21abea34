//! Training loop.
//!
//! Each step draws a batch of scenes. For every scene all vocabulary anchors
//! are noised and denoised in one batch; the candidate closest to the expert
//! receives the L1 trajectory loss, backpropagated through the reverse chain
//! into the refiner and the HATNA gains. Vocabulary anchors and the refined
//! candidates (detached) are then scored together for the imitation and
//! simulation losses, whose gradients also reach the world-model rollout.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RefinerKind, RunConfig};
use crate::error::{parameter, Error, Result};
use crate::losses::{
    focal_loss_from_logits, imitation_loss_from_logits, imitation_targets, l1_stacked, l1_stacked_grad,
    simulation_loss_from_logits, total_loss, wta_winner, LossParts,
};
use crate::model::{RefinerPass, SCORE_HEADS};
use crate::nn::{Adam, Mlp};
use crate::planner::{assemble, offset, Checkpoint, Planner};
use crate::scene::{encode_scene, evaluate_submetrics_with, Scene};
use crate::traj::{PositionSequence, Trajectory};
use crate::vocab::Vocabulary;
use crate::world_model::{agent_grid, ground_truth_grid};

/// One line of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub traj: f64,
    pub im: f64,
    pub sim: f64,
    pub lwm: f64,
    pub bev: f64,
    pub agent: f64,
}

/// Per-scene quantities that do not change during training.
struct SceneData {
    z: Vec<f64>,
    lwm_target: Vec<f64>,
    bev_target: Vec<f64>,
    agent_target: Vec<f64>,
    anchor_targets: Vec<[f64; 5]>,
}

fn prepare(scene: &Scene, vocab: &Vocabulary, config: &RunConfig) -> Result<SceneData> {
    let grid = &config.model.grid;
    let n = scene.horizon();
    let anchor_targets = vocab
        .anchors
        .iter()
        .map(|a| evaluate_submetrics_with(scene, a, &config.eval).map(|m| m.as_array()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneData {
        z: encode_scene(scene),
        lwm_target: ground_truth_grid(scene, n, grid)?.as_targets(),
        bev_target: ground_truth_grid(scene, 0, grid)?.as_targets(),
        agent_target: agent_grid(scene, 0, grid)?.as_targets(),
        anchor_targets,
    })
}

/// Gradient buffers shaped like the planner's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub refiner: Vec<f64>,
    pub scorer: Vec<f64>,
    pub rollout: Vec<f64>,
    pub decoder: Vec<f64>,
    pub bev: Vec<f64>,
    pub agent: Vec<f64>,
    pub gains: Vec<f64>,
}

impl Gradients {
    pub fn zeros(p: &Planner) -> Self {
        Self {
            refiner: vec![0.0; p.denoiser.refiner.params.len()],
            scorer: vec![0.0; p.denoiser.scorer.params.len()],
            rollout: vec![0.0; p.world.rollout.params.len()],
            decoder: vec![0.0; p.world.decoder.params.len()],
            bev: vec![0.0; p.world.bev_head.params.len()],
            agent: vec![0.0; p.world.agent_head.params.len()],
            gains: vec![0.0; p.hatna.gain_log.len()],
        }
    }

    fn buffers_mut(&mut self) -> [&mut Vec<f64>; 7] {
        [&mut self.refiner, &mut self.scorer, &mut self.rollout, &mut self.decoder, &mut self.bev, &mut self.agent, &mut self.gains]
    }

    fn scale(&mut self, s: f64) {
        for b in self.buffers_mut() {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// One reverse stage of the batched refinement.
struct Stage {
    t: usize,
    t_prev: usize,
    pass: RefinerPass,
}

/// Forward state of a batched refinement, kept for backpropagation.
pub struct RefineTrace {
    stages: Vec<Stage>,
    /// Raw (pre-HATNA) noise per anchor; empty for the regression refiner.
    raw_noise: Vec<Vec<[f64; 2]>>,
    /// Output trajectory of every stage for every anchor.
    pub outputs: Vec<Vec<Trajectory>>,
}

impl RefineTrace {
    pub fn finals(&self) -> &[Trajectory] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Batched refinement of all anchors, recording every stage.
pub fn refine_traced(planner: &Planner, z: &[f64], anchors: &[Trajectory], rng: &mut ChaCha8Rng) -> Result<RefineTrace> {
    let sched = &planner.schedule;
    let dt = anchors.first().map_or(0.5, |a| a.dt);
    let anchor_pos: Vec<PositionSequence> = anchors.iter().map(Trajectory::positions).collect();
    let (mut states, steps, raw_noise) = match planner.config.refiner {
        RefinerKind::Diffusion => {
            let ab = sched.alpha_bar_at(sched.t_truncate);
            let mut raws = Vec::with_capacity(anchors.len());
            let states = anchor_pos
                .iter()
                .map(|a| {
                    let (raw, eps) = planner.sample_noise(rng);
                    raws.push(raw);
                    PositionSequence {
                        points: a
                            .points
                            .iter()
                            .zip(&eps)
                            .map(|(p, e)| [ab.sqrt() * p[0] + (1.0 - ab).sqrt() * e[0], ab.sqrt() * p[1] + (1.0 - ab).sqrt() * e[1]])
                            .collect(),
                    }
                })
                .collect();
            (states, sched.reverse_steps(), raws)
        }
        RefinerKind::Regression => (anchor_pos.clone(), vec![(0, 0)], Vec::new()),
    };
    let n = planner.config.waypoints;
    let mut stages = Vec::with_capacity(steps.len());
    let mut outputs = Vec::with_capacity(steps.len());
    for (t, t_prev) in steps {
        let pass = planner.denoiser.refine_forward(&states, z, t)?;
        let estimates: Vec<PositionSequence> = anchor_pos
            .iter()
            .enumerate()
            .map(|(r, a)| offset(a, &pass.delta[r * 2 * n..(r + 1) * 2 * n]))
            .collect();
        outputs.push(
            estimates
                .iter()
                .enumerate()
                .map(|(r, e)| assemble(e, &pass.heading[r * n..(r + 1) * n], dt))
                .collect::<Result<Vec<_>>>()?,
        );
        states = if t_prev == 0 {
            estimates.clone()
        } else {
            let (c0, ct) = sched.ddim_coefficients(t, t_prev)?;
            estimates
                .iter()
                .zip(&states)
                .map(|(e, s)| PositionSequence {
                    points: e.points.iter().zip(&s.points).map(|(a, b)| [c0 * a[0] + ct * b[0], c0 * a[1] + ct * b[1]]).collect(),
                })
                .collect()
        };
        stages.push(Stage { t, t_prev, pass });
    }
    Ok(RefineTrace { stages, raw_noise, outputs })
}

/// Backpropagates a loss on the stage outputs of one anchor row.
/// `grad_stage[s]` holds `(d/dpositions, d/dheadings)` for stage `s`
/// (zero vectors for unsupervised stages). Refiner gradients and HATNA gain
/// gradients are accumulated into `grads`.
pub fn backprop_row(
    planner: &Planner,
    trace: &RefineTrace,
    row: usize,
    grad_stage: &[(Vec<[f64; 2]>, Vec<f64>)],
    grads: &mut Gradients,
) -> Result<()> {
    let n = planner.config.waypoints;
    let sched = &planner.schedule;
    let mut g_out = vec![0.0; 2 * n];
    for (s, stage) in trace.stages.iter().enumerate().rev() {
        let rows = stage.pass.rows;
        let (gp, gh) = &grad_stage[s];
        let mut g_est: Vec<f64> = gp.iter().flatten().copied().collect();
        let mut g_state_direct = vec![0.0; 2 * n];
        if stage.t_prev > 0 {
            let (c0, ct) = sched.ddim_coefficients(stage.t, stage.t_prev)?;
            for j in 0..2 * n {
                g_est[j] += c0 * g_out[j];
                g_state_direct[j] = ct * g_out[j];
            }
        }
        let mut g_delta = vec![0.0; rows * 2 * n];
        g_delta[row * 2 * n..(row + 1) * 2 * n].copy_from_slice(&g_est);
        let mut g_heading = vec![0.0; rows * n];
        g_heading[row * n..(row + 1) * n].copy_from_slice(gh);
        let g_in = planner.denoiser.refine_backward(&stage.pass, &g_delta, &g_heading, &mut grads.refiner);
        for j in 0..2 * n {
            g_out[j] = g_in[row * 2 * n + j] + g_state_direct[j];
        }
    }
    if planner.config.refiner == RefinerKind::Diffusion && planner.config.use_hatna {
        let ab = sched.alpha_bar_at(sched.t_truncate);
        let k = (1.0 - ab).sqrt() * planner.config.noise_scale;
        let up: Vec<[f64; 2]> = g_out.chunks_exact(2).map(|c| [k * c[0], k * c[1]]).collect();
        for (g, v) in grads.gains.iter_mut().zip(planner.hatna.gain_gradient(&trace.raw_noise[row], &up)) {
            *g += v;
        }
    }
    Ok(())
}

/// Gradients of `(1/S) sum_s l1(stage_s, gt)` for the supervised stages.
pub fn stage_supervision(trace: &RefineTrace, row: usize, gt: &Trajectory, deep: bool, weight: f64) -> (f64, Vec<(Vec<[f64; 2]>, Vec<f64>)>) {
    let s_count = trace.outputs.len();
    let n = gt.len();
    let supervised: Vec<bool> = (0..s_count).map(|s| deep || s + 1 == s_count).collect();
    let m = supervised.iter().filter(|&&b| b).count() as f64;
    let mut loss = 0.0;
    let grads = (0..s_count)
        .map(|s| {
            if !supervised[s] {
                return (vec![[0.0; 2]; n], vec![0.0; n]);
            }
            let out = &trace.outputs[s][row];
            loss += l1_stacked(out, gt) / m;
            let (gp, gh) = l1_stacked_grad(out, gt);
            (
                gp.into_iter().map(|p| [p[0] * weight / m, p[1] * weight / m]).collect(),
                gh.into_iter().map(|h| h * weight / m).collect(),
            )
        })
        .collect();
    (loss, grads)
}

fn focal_head(net: &Mlp, input: &[f64], rows: usize, target: &[f64], weight: f64, cfg: &RunConfig, grad: &mut [f64]) -> Result<(f64, Vec<f64>)> {
    let (logits, cache) = net.forward_cached(input, rows)?;
    let (loss, g) = focal_loss_from_logits(&logits, target, &cfg.train.focal);
    let g: Vec<f64> = g.into_iter().map(|v| v * weight).collect();
    let gx = net.backward(&cache, &g, grad);
    Ok((loss, gx))
}

fn scene_gradients(
    planner: &Planner,
    config: &RunConfig,
    scene: &Scene,
    data: &SceneData,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
    grads: &mut Gradients,
) -> Result<LossParts> {
    let lw = &config.train.loss_weights;
    let z = &data.z;
    let gt = &scene.expert;
    let k = vocab.len();

    let trace = refine_traced(planner, z, &vocab.anchors, rng)?;
    let winner = wta_winner(trace.finals(), gt)?;
    let (traj_loss, grad_stage) = stage_supervision(&trace, winner, gt, config.train.deep_supervision, lw.traj);
    if lw.traj != 0.0 {
        backprop_row(planner, &trace, winner, &grad_stage, grads)?;
    }

    let mut candidates = vocab.anchors.clone();
    candidates.extend(trace.finals().iter().cloned());
    let mut sim_targets: Vec<f64> = data.anchor_targets.iter().flatten().copied().collect();
    for c in trace.finals() {
        sim_targets.extend(evaluate_submetrics_with(scene, c, &config.eval)?.as_array());
    }
    let im_targets = imitation_targets(&candidates, gt)?;

    let mut rollout_inputs = candidates.clone();
    rollout_inputs.push(gt.clone());
    let roll = planner.world.rollout_forward(z, &rollout_inputs)?;
    let d_lat = planner.config.latent_dim;
    let latents: Vec<Vec<f64>> = roll.latent.chunks_exact(d_lat).map(<[f64]>::to_vec).collect();
    let score = planner.denoiser.score_forward(&candidates, z, &latents[..2 * k])?;
    let im_logits: Vec<f64> = score.logits.chunks_exact(SCORE_HEADS).map(|r| r[0]).collect();
    let sim_logits: Vec<f64> = score.logits.chunks_exact(SCORE_HEADS).flat_map(|r| r[1..].to_vec()).collect();
    let (im_loss, g_im) = imitation_loss_from_logits(&im_logits, &im_targets);
    let (sim_loss, g_sim) = simulation_loss_from_logits(&sim_logits, &sim_targets);
    let mut g_logits = vec![0.0; score.logits.len()];
    for r in 0..2 * k {
        g_logits[r * SCORE_HEADS] = lw.im * g_im[r];
        for h in 1..SCORE_HEADS {
            g_logits[r * SCORE_HEADS + h] = lw.sim * g_sim[r * (SCORE_HEADS - 1) + h - 1];
        }
    }
    let g_lat = planner.denoiser.score_backward(&score, &g_logits, &mut grads.scorer);

    let expert_latent = &roll.latent[2 * k * d_lat..];
    let (lwm_loss, g_expert_lat) = focal_head(&planner.world.decoder, expert_latent, 1, &data.lwm_target, lw.lwm, config, &mut grads.decoder)?;
    let mut g_roll: Vec<f64> = g_lat.into_iter().flatten().collect();
    g_roll.extend(g_expert_lat);
    planner.world.rollout_backward(&roll, &g_roll, &mut grads.rollout);

    let (bev_loss, _) = focal_head(&planner.world.bev_head, z, 1, &data.bev_target, lw.bev, config, &mut grads.bev)?;
    let (agent_loss, _) = focal_head(&planner.world.agent_head, z, 1, &data.agent_target, lw.agent, config, &mut grads.agent)?;

    Ok(LossParts { traj: traj_loss, im: im_loss, sim: sim_loss, lwm: lwm_loss, bev: bev_loss, agent: agent_loss })
}

struct Optimizers {
    refiner: Adam,
    scorer: Adam,
    rollout: Adam,
    decoder: Adam,
    bev: Adam,
    agent: Adam,
    gains: Adam,
}

impl Optimizers {
    fn new(p: &Planner) -> Self {
        Self {
            refiner: Adam::new(p.denoiser.refiner.params.len()),
            scorer: Adam::new(p.denoiser.scorer.params.len()),
            rollout: Adam::new(p.world.rollout.params.len()),
            decoder: Adam::new(p.world.decoder.params.len()),
            bev: Adam::new(p.world.bev_head.params.len()),
            agent: Adam::new(p.world.agent_head.params.len()),
            gains: Adam::new(p.hatna.gain_log.len()),
        }
    }

    fn apply(&mut self, p: &mut Planner, g: &Gradients, lr: f64, train_gains: bool) {
        self.refiner.update(&mut p.denoiser.refiner.params, &g.refiner, lr);
        self.scorer.update(&mut p.denoiser.scorer.params, &g.scorer, lr);
        self.rollout.update(&mut p.world.rollout.params, &g.rollout, lr);
        self.decoder.update(&mut p.world.decoder.params, &g.decoder, lr);
        self.bev.update(&mut p.world.bev_head.params, &g.bev, lr);
        self.agent.update(&mut p.world.agent_head.params, &g.agent, lr);
        if train_gains {
            self.gains.update(&mut p.hatna.gain_log, &g.gains, lr);
        }
    }
}

/// Gradients and loss parts of one scene for the current planner; exposed
/// for gradient checks.
pub fn scene_loss_and_gradients(
    planner: &Planner,
    config: &RunConfig,
    scene: &Scene,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> Result<(LossParts, Gradients)> {
    let data = prepare(scene, vocab, config)?;
    let mut grads = Gradients::zeros(planner);
    let parts = scene_gradients(planner, config, scene, &data, vocab, rng, &mut grads)?;
    Ok((parts, grads))
}

/// Trains a planner from scratch on `scenes`; `on_record` receives every
/// loss-curve record.
pub fn train(
    config: &RunConfig,
    scenes: &[Scene],
    vocab: &Vocabulary,
    mut on_record: impl FnMut(&LossRecord) -> Result<()>,
) -> Result<Checkpoint> {
    config.validate()?;
    if scenes.is_empty() {
        return Err(parameter("training corpus is empty"));
    }
    if vocab.horizon() != config.model.waypoints {
        return Err(parameter("vocabulary horizon does not match the model"));
    }
    let mut planner = Planner::new(&config.model, config.seed)?;
    let mut opt = Optimizers::new(&planner);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7261_696e);
    let mut cache: Vec<Option<SceneData>> = (0..scenes.len()).map(|_| None).collect();
    let tc = &config.train;
    let train_gains = config.model.refiner == RefinerKind::Diffusion && config.model.use_hatna;
    for step in 0..tc.steps {
        let mut grads = Gradients::zeros(&planner);
        let mut sum = [0.0; 6];
        for _ in 0..tc.batch_size {
            let i = rng.random_range(0..scenes.len());
            if cache[i].is_none() {
                cache[i] = Some(prepare(&scenes[i], vocab, config)?);
            }
            let data = cache[i].as_ref().unwrap();
            let parts = scene_gradients(&planner, config, &scenes[i], data, vocab, &mut rng, &mut grads)?;
            for (s, v) in sum.iter_mut().zip(parts.as_array()) {
                *s += v;
            }
        }
        let b = tc.batch_size as f64;
        grads.scale(1.0 / b);
        let parts = LossParts {
            traj: sum[0] / b,
            im: sum[1] / b,
            sim: sum[2] / b,
            lwm: sum[3] / b,
            bev: sum[4] / b,
            agent: sum[5] / b,
        };
        let total = total_loss(&parts, &tc.loss_weights).map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence { step, detail },
            other => other,
        })?;
        if total > tc.divergence_threshold {
            return Err(Error::Divergence { step, detail: format!("total loss {total:.3e} exceeds {:.1e}", tc.divergence_threshold) });
        }
        let lr = tc.learning_rate_at(step);
        opt.apply(&mut planner, &grads, lr, train_gains);
        if step % tc.log_every.max(1) == 0 || step + 1 == tc.steps {
            on_record(&LossRecord {
                step,
                lr,
                total,
                traj: parts.traj,
                im: parts.im,
                sim: parts.sim,
                lwm: parts.lwm,
                bev: parts.bev,
                agent: parts.agent,
            })?;
        }
    }
    planner.check()?;
    Checkpoint::new(config.clone(), tc.steps, planner)
}

/// Writes loss records as line-delimited JSON.
pub fn jsonl_sink<W: Write>(mut w: W) -> impl FnMut(&LossRecord) -> Result<()> {
    move |r| {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}
