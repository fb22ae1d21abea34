//! Candidate assembly, the weighted-score decision rule and evaluation.

use serde::{Deserialize, Serialize};

use crate::config::{RefinerKind, ScoreWeights};
use crate::error::{contract, parameter, Result};
use crate::model::ScoreVector;
use crate::planner::{scene_rng, Planner};
use crate::scene::{encode_scene, evaluate_submetrics, pdms, Difficulty, Scene, SubMetrics};
use crate::traj::{ade, Trajectory};
use crate::vocab::Vocabulary;

pub const REPORT_FORMAT: &str = "cddrive-report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    VocabOnly,
    DiffusionOnly,
    Unified,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::VocabOnly, Mode::DiffusionOnly, Mode::Unified];

    pub fn uses_diffusion(self) -> bool {
        self != Mode::VocabOnly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Vocabulary,
    Refined,
}

/// Candidates of one scene. In unified mode vocabulary candidates come
/// first, so exact score ties favour them.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub mode: Mode,
    pub vocab_candidates: Vec<Trajectory>,
    pub diffusion_candidates: Vec<Trajectory>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.vocab_candidates.len() + self.diffusion_candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn provenance(&self, i: usize) -> Provenance {
        if i < self.vocab_candidates.len() { Provenance::Vocabulary } else { Provenance::Refined }
    }

    pub fn get(&self, i: usize) -> &Trajectory {
        let k = self.vocab_candidates.len();
        if i < k { &self.vocab_candidates[i] } else { &self.diffusion_candidates[i - k] }
    }

    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.vocab_candidates.iter().chain(&self.diffusion_candidates).cloned().collect()
    }
}

/// Assembles the candidates for `mode`; refined candidates use the noise
/// stream of `(seed, scene)`.
pub fn build_candidates(
    mode: Mode,
    vocab: &Vocabulary,
    planner: Option<&Planner>,
    scene: &Scene,
    seed: u64,
) -> Result<CandidateSet> {
    let refined = if mode.uses_diffusion() {
        let p = planner.ok_or_else(|| parameter("a trained model is required for refined candidates"))?;
        p.refine_anchors(&encode_scene(scene), &vocab.anchors, &mut scene_rng(seed, scene))?
    } else {
        Vec::new()
    };
    Ok(match mode {
        Mode::VocabOnly => CandidateSet { mode, vocab_candidates: vocab.anchors.clone(), diffusion_candidates: Vec::new() },
        Mode::DiffusionOnly => CandidateSet { mode, vocab_candidates: Vec::new(), diffusion_candidates: refined },
        Mode::Unified => CandidateSet { mode, vocab_candidates: vocab.anchors.clone(), diffusion_candidates: refined },
    })
}

/// The only place candidates are scored: both provenance classes go
/// through one call with shared weights.
pub fn score_candidates(planner: &Planner, scene: &Scene, set: &CandidateSet) -> Result<Vec<ScoreVector>> {
    planner.score(&encode_scene(scene), &set.trajectories())
}

pub fn aggregate(s: &ScoreVector, w: &ScoreWeights) -> f64 {
    s.as_array().iter().zip(w.as_array()).map(|(a, b)| a * b).sum()
}

/// Index of the highest aggregated score; ties go to the lowest index.
pub fn decide(scores: &[ScoreVector], w: &ScoreWeights) -> Result<usize> {
    if scores.is_empty() {
        return Err(parameter("cannot decide among zero candidates"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.iter().enumerate() {
        let v = aggregate(s, w);
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best.0)
}

/// Decision for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub set: CandidateSet,
    pub scores: Vec<ScoreVector>,
    pub index: usize,
}

impl Decision {
    pub fn trajectory(&self) -> &Trajectory {
        self.set.get(self.index)
    }
}

pub fn plan_scene(
    mode: Mode,
    vocab: &Vocabulary,
    planner: &Planner,
    scene: &Scene,
    w: &ScoreWeights,
    seed: u64,
) -> Result<Decision> {
    let set = build_candidates(mode, vocab, Some(planner), scene, seed)?;
    let scores = score_candidates(planner, scene, &set)?;
    if scores.len() != set.len() {
        return Err(contract("scorer returned the wrong number of scores"));
    }
    let index = decide(&scores, w)?;
    Ok(Decision { set, scores, index })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSubMetrics {
    pub nc: f64,
    pub dac: f64,
    pub ep: f64,
    pub ttc: f64,
    pub comf: f64,
}

/// Means over all scenes and over each difficulty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub all: f64,
    pub routine: f64,
    pub interactive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: Mode,
    pub pdms: Split,
    pub submetrics: MeanSubMetrics,
    /// ADE of the decided trajectory against the expert.
    pub decided_ade: Split,
    /// Smallest candidate-to-expert ADE among refined candidates.
    pub refined_min_ade: Option<Split>,
    /// Mean positional second-difference magnitude of refined candidates.
    pub refined_kink: Option<f64>,
    /// Fraction of scenes whose decision is a refined candidate.
    pub refined_selected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub schema_version: u32,
    pub checkpoint_config_hash: String,
    pub refiner: RefinerKind,
    pub hatna: bool,
    pub seed: u64,
    pub scenes: usize,
    pub interactive_scenes: usize,
    pub modes: Vec<ModeReport>,
}

#[derive(Default)]
struct Accum {
    sum: [f64; 3],
    count: [usize; 3],
}

impl Accum {
    fn add(&mut self, d: Difficulty, v: f64) {
        let slot = if d == Difficulty::Routine { 1 } else { 2 };
        for s in [0, slot] {
            self.sum[s] += v;
            self.count[s] += 1;
        }
    }

    fn split(&self) -> Split {
        let m = |i: usize| if self.count[i] == 0 { 0.0 } else { self.sum[i] / self.count[i] as f64 };
        Split { all: m(0), routine: m(1), interactive: m(2) }
    }
}

/// Runs the decision rule on every scene for one mode.
pub fn evaluate_mode(
    scenes: &[Scene],
    mode: Mode,
    planner: &Planner,
    vocab: &Vocabulary,
    w: &ScoreWeights,
    seed: u64,
) -> Result<ModeReport> {
    let mut score = Accum::default();
    let mut decided = Accum::default();
    let mut min_ade = Accum::default();
    let mut sub = [0.0; 5];
    let mut kink = (0.0, 0usize);
    let mut refined_selected = 0usize;
    for scene in scenes {
        let d = plan_scene(mode, vocab, planner, scene, w, seed)?;
        let chosen = d.trajectory();
        let m = evaluate_submetrics(scene, chosen)?;
        score.add(scene.difficulty, pdms(&m));
        decided.add(scene.difficulty, ade(chosen, &scene.expert)?);
        for (s, v) in sub.iter_mut().zip(m.as_array()) {
            *s += v;
        }
        if d.set.provenance(d.index) == Provenance::Refined {
            refined_selected += 1;
        }
        if !d.set.diffusion_candidates.is_empty() {
            let best = d
                .set
                .diffusion_candidates
                .iter()
                .map(|c| ade(c, &scene.expert))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            min_ade.add(scene.difficulty, best);
            for c in &d.set.diffusion_candidates {
                kink.0 += c.mean_second_difference();
                kink.1 += 1;
            }
        }
    }
    let n = scenes.len().max(1) as f64;
    let refined = mode.uses_diffusion();
    Ok(ModeReport {
        mode,
        pdms: score.split(),
        submetrics: MeanSubMetrics { nc: sub[0] / n, dac: sub[1] / n, ep: sub[2] / n, ttc: sub[3] / n, comf: sub[4] / n },
        decided_ade: decided.split(),
        refined_min_ade: refined.then(|| min_ade.split()),
        refined_kink: refined.then(|| kink.0 / kink.1.max(1) as f64),
        refined_selected: refined_selected as f64 / n,
    })
}

pub fn evaluate(
    scenes: &[Scene],
    modes: &[Mode],
    planner: &Planner,
    vocab: &Vocabulary,
    w: &ScoreWeights,
    seed: u64,
    config_hash: &str,
) -> Result<Report> {
    let modes = modes
        .iter()
        .map(|&m| evaluate_mode(scenes, m, planner, vocab, w, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report {
        format: REPORT_FORMAT.into(),
        schema_version: REPORT_SCHEMA_VERSION,
        checkpoint_config_hash: config_hash.into(),
        refiner: planner.config.refiner,
        hatna: planner.config.use_hatna,
        seed,
        scenes: scenes.len(),
        interactive_scenes: scenes.iter().filter(|s| s.difficulty == Difficulty::Interactive).count(),
        modes,
    })
}

/// Mean PDMS when every scene's only candidate is its expert.
pub fn expert_pdms(scenes: &[Scene]) -> Result<f64> {
    let mut total = 0.0;
    for s in scenes {
        let m: SubMetrics = evaluate_submetrics(s, &s.expert)?;
        total += pdms(&m);
    }
    Ok(total / scenes.len().max(1) as f64)
}
