//! Ablation grid: candidate-set modes, HATNA on/off and diffusion versus
//! regression refinement, trained and evaluated in one run.

use serde::{Deserialize, Serialize};

use crate::config::{RefinerKind, RunConfig};
use crate::decision::{evaluate, Mode, ModeReport, Report};
use crate::error::{parameter, Result};
use crate::planner::Checkpoint;
use crate::scene::Scene;
use crate::train::{train, LossRecord};
use crate::vocab::Vocabulary;

pub const ABLATION_FORMAT: &str = "cddrive-ablation";
pub const ABLATION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub refiner: RefinerKind,
    pub hatna: bool,
}

/// HATNA diffusion, plain diffusion and the regression refiner. The
/// regression refiner draws no noise, so HATNA does not apply to it.
pub fn standard_variants() -> Vec<Variant> {
    vec![
        Variant { name: "diffusion_hatna".into(), refiner: RefinerKind::Diffusion, hatna: true },
        Variant { name: "diffusion_plain".into(), refiner: RefinerKind::Diffusion, hatna: false },
        Variant { name: "regression".into(), refiner: RefinerKind::Regression, hatna: false },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub config_hash: String,
    pub final_loss: Option<f64>,
    pub report: Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub format: String,
    pub schema_version: u32,
    pub train_scenes: usize,
    pub eval_scenes: usize,
    pub variants: Vec<VariantReport>,
    pub trends: Vec<Trend>,
}

impl AblationReport {
    pub fn variant(&self, name: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.variant.name == name)
    }
}

impl VariantReport {
    pub fn mode(&self, m: Mode) -> Option<&ModeReport> {
        self.report.modes.iter().find(|r| r.mode == m)
    }
}

pub fn variant_config(base: &RunConfig, v: &Variant) -> RunConfig {
    let mut c = base.clone();
    c.model.refiner = v.refiner;
    c.model.use_hatna = v.hatna;
    c
}

/// Trains every variant from the same seed and evaluates it on `eval`.
/// `on_record` receives each variant's loss curve.
pub fn run_ablation(
    base: &RunConfig,
    variants: &[Variant],
    train_scenes: &[Scene],
    eval_scenes: &[Scene],
    vocab: &Vocabulary,
    eval_seed: u64,
    mut on_record: impl FnMut(&Variant, &LossRecord) -> Result<()>,
) -> Result<(AblationReport, Vec<Checkpoint>)> {
    if variants.is_empty() {
        return Err(parameter("no ablation variants"));
    }
    let mut reports = Vec::new();
    let mut checkpoints = Vec::new();
    for v in variants {
        let cfg = variant_config(base, v);
        let mut last = None;
        let ckpt = train(&cfg, train_scenes, vocab, |r| {
            last = Some(r.total);
            on_record(v, r)
        })?;
        let report = evaluate(eval_scenes, &Mode::ALL, &ckpt.planner, vocab, &cfg.score_weights, eval_seed, &ckpt.config_hash)?;
        reports.push(VariantReport { variant: v.clone(), config_hash: ckpt.config_hash.clone(), final_loss: last, report });
        checkpoints.push(ckpt);
    }
    let mut out = AblationReport {
        format: ABLATION_FORMAT.into(),
        schema_version: ABLATION_SCHEMA_VERSION,
        train_scenes: train_scenes.len(),
        eval_scenes: eval_scenes.len(),
        variants: reports,
        trends: Vec::new(),
    };
    out.trends = trends(&out);
    Ok((out, checkpoints))
}

/// The expected orderings, checked on whichever variants are present.
pub fn trends(r: &AblationReport) -> Vec<Trend> {
    let mut out = Vec::new();
    if let Some(h) = r.variant("diffusion_hatna") {
        if let (Some(v), Some(d), Some(u)) = (h.mode(Mode::VocabOnly), h.mode(Mode::DiffusionOnly), h.mode(Mode::Unified)) {
            let (pv, pd, pu) = (v.pdms.all, d.pdms.all, u.pdms.all);
            out.push(Trend {
                name: "candidate_set".into(),
                passed: pu > pd && pd > pv && pu - pv >= 0.01,
                detail: format!("pdms unified {pu:.4} diffusion_only {pd:.4} vocab_only {pv:.4}"),
            });
        }
        if let Some(p) = r.variant("diffusion_plain") {
            if let (Some(a), Some(b)) = (h.mode(Mode::Unified), p.mode(Mode::Unified)) {
                let (ka, kb) = (a.refined_kink.unwrap_or(f64::NAN), b.refined_kink.unwrap_or(f64::NAN));
                let (ca, cb) = (a.submetrics.comf, b.submetrics.comf);
                out.push(Trend {
                    name: "noise_adapter".into(),
                    passed: ca >= cb && ka < kb,
                    detail: format!("comf {ca:.4} vs {cb:.4}, kink {ka:.4} vs {kb:.4} (with vs without)"),
                });
            }
        }
        if let Some(g) = r.variant("regression") {
            let ade = |x: &VariantReport| x.mode(Mode::DiffusionOnly).and_then(|m| m.refined_min_ade).map(|s| s.interactive);
            if let (Some(a), Some(b)) = (ade(h), ade(g)) {
                out.push(Trend {
                    name: "refiner".into(),
                    passed: a < b,
                    detail: format!("interactive candidate ADE diffusion {a:.4} vs regression {b:.4}"),
                });
            }
        }
    }
    out
}
