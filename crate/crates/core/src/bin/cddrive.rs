use std::fs::File;
use std::io::BufWriter;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cddrive::ablate::{run_ablation, standard_variants};
use cddrive::config::{RefinerKind, RunConfig};
use cddrive::decision::{evaluate, plan_scene, Mode};
use cddrive::io::write_json;
use cddrive::planner::Checkpoint;
use cddrive::plot::plot_scene;
use cddrive::scene::corpus::{generate_corpus, Corpus};
use cddrive::scene::Scene;
use cddrive::train::{jsonl_sink, train};
use cddrive::vocab::{build_vocabulary, Vocabulary};
use cddrive::{Error, Result};

#[derive(Parser)]
#[command(name = "cddrive", about = "Vocabulary plus diffusion-refined trajectory planning on a synthetic driving world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene corpus.
    GenData {
        /// Scene seeds as START..END.
        #[arg(long, value_parser = parse_range)]
        seed_range: Range<u64>,
        #[arg(long, default_value_t = 0.5)]
        interactive_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster the experts of a corpus into a trajectory vocabulary.
    BuildVocab {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 256)]
        k: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a planner and write its checkpoint.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Loss curve as line-delimited JSON.
        #[arg(long)]
        loss_log: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[command(flatten)]
        scenes: SceneSource,
        /// Modes to evaluate; all when omitted.
        #[arg(long, value_enum)]
        mode: Vec<Mode>,
        #[arg(long, default_value_t = 1)]
        eval_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate the HATNA, plain diffusion and regression variants.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Training scene seeds as START..END.
        #[arg(long, value_parser = parse_range, default_value = "0..2000")]
        seed_range: Range<u64>,
        /// Held-out scene seeds as START..END.
        #[arg(long, value_parser = parse_range, default_value = "1000000..1000500")]
        eval_seed_range: Range<u64>,
        #[arg(long, default_value_t = 1)]
        eval_seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one scene and its decision as SVG.
    Plot {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[command(flatten)]
        scenes: SceneSource,
        /// Index of the scene within the corpus.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, value_enum, default_value = "unified")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        eval_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration JSON; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    refiner: Option<RefinerKind>,
    #[arg(long)]
    no_hatna: bool,
    /// Vocabulary size.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(r) = self.refiner {
            c.model.refiner = r;
        }
        if self.no_hatna {
            c.model.use_hatna = false;
        }
        if let Some(k) = self.k {
            c.data.vocab_size = k;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(s) = self.steps {
            c.train.steps = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct SceneSource {
    /// Corpus file.
    #[arg(long, conflicts_with = "seed_range")]
    data: Option<PathBuf>,
    /// Generate scenes with seeds START..END instead of reading a corpus.
    #[arg(long, value_parser = parse_range)]
    seed_range: Option<Range<u64>>,
    #[arg(long, default_value_t = 0.5)]
    interactive_fraction: f64,
}

impl SceneSource {
    fn load(&self) -> Result<Vec<Scene>> {
        match (&self.data, &self.seed_range) {
            (Some(p), _) => Ok(Corpus::read(p)?.scenes),
            (None, Some(r)) => corpus_from_range(r, self.interactive_fraction).map(|c| c.scenes),
            (None, None) => Err(Error::Parameter("either --data or --seed-range is required".into())),
        }
    }
}

fn parse_range(s: &str) -> std::result::Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or("expected START..END")?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad start: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("bad end: {e}"))?;
    if b <= a {
        return Err("END must exceed START".into());
    }
    Ok(a..b)
}

fn corpus_from_range(r: &Range<u64>, fraction: f64) -> Result<Corpus> {
    generate_corpus(r.start, (r.end - r.start) as usize, fraction)
}

fn check_k(config: &RunConfig, vocab: &Vocabulary) -> Result<()> {
    if vocab.len() != config.data.vocab_size {
        return Err(Error::Contract(format!(
            "vocabulary has {} anchors but the run expects {}",
            vocab.len(),
            config.data.vocab_size
        )));
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { seed_range, interactive_fraction, out } => {
            let c = corpus_from_range(&seed_range, interactive_fraction)?;
            c.write(&out)?;
            eprintln!("wrote {} scenes to {}", c.scenes.len(), out.display());
        }
        Command::BuildVocab { data, k, seed, out } => {
            let experts: Vec<_> = Corpus::read(&data)?.scenes.into_iter().map(|s| s.expert).collect();
            let v = build_vocabulary(&experts, k, seed)?;
            v.save(&out)?;
            eprintln!("wrote {} anchors to {}", v.len(), out.display());
        }
        Command::Train { run, data, vocab, loss_log, out } => {
            let config = run.resolve()?;
            let vocab = Vocabulary::load(&vocab)?;
            check_k(&config, &vocab)?;
            let scenes = Corpus::read(&data)?.scenes;
            let ckpt = match loss_log {
                Some(p) => train(&config, &scenes, &vocab, jsonl_sink(create(&p)?))?,
                None => train(&config, &scenes, &vocab, |_| Ok(()))?,
            };
            ckpt.save(&out)?;
            eprintln!("trained {} steps, config {}", ckpt.steps_trained, ckpt.config_hash);
        }
        Command::Eval { checkpoint, vocab, scenes, mode, eval_seed, out } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let vocab = Vocabulary::load(&vocab)?;
            check_k(&ckpt.config, &vocab)?;
            let scenes = scenes.load()?;
            let modes = if mode.is_empty() { Mode::ALL.to_vec() } else { mode };
            let report = evaluate(&scenes, &modes, &ckpt.planner, &vocab, &ckpt.config.score_weights, eval_seed, &ckpt.config_hash)?;
            write_json(&out, &report)?;
            for m in &report.modes {
                eprintln!("{:?}: pdms {:.4}", m.mode, m.pdms.all);
            }
        }
        Command::Ablate { run, seed_range, eval_seed_range, eval_seed, out } => {
            let config = run.resolve()?;
            if seed_range.start < eval_seed_range.end && eval_seed_range.start < seed_range.end {
                return Err(Error::Parameter("training and held-out seed ranges overlap".into()));
            }
            std::fs::create_dir_all(&out)?;
            let train_scenes = corpus_from_range(&seed_range, config.data.interactive_fraction)?.scenes;
            let eval_scenes = corpus_from_range(&eval_seed_range, config.data.interactive_fraction)?.scenes;
            let experts: Vec<_> = train_scenes.iter().map(|s| s.expert.clone()).collect();
            let vocab = build_vocabulary(&experts, config.data.vocab_size, config.data.vocab_seed)?;
            vocab.save(out.join("vocab.json"))?;
            let mut sinks = Vec::new();
            for v in standard_variants() {
                sinks.push(jsonl_sink(create(&out.join(format!("loss_{}.jsonl", v.name)))?));
            }
            let variants = standard_variants();
            let (report, ckpts) = run_ablation(&config, &variants, &train_scenes, &eval_scenes, &vocab, eval_seed, |v, r| {
                let i = variants.iter().position(|x| x == v).unwrap_or(0);
                sinks[i](r)
            })?;
            for (v, c) in variants.iter().zip(&ckpts) {
                c.save(out.join(format!("checkpoint_{}.json", v.name)))?;
            }
            write_json(&out.join("ablation.json"), &report)?;
            for t in &report.trends {
                eprintln!("{} {}: {}", if t.passed { "PASS" } else { "FAIL" }, t.name, t.detail);
            }
        }
        Command::Plot { checkpoint, vocab, scenes, index, mode, eval_seed, out } => {
            let scenes = scenes.load()?;
            let scene = scenes
                .get(index)
                .ok_or_else(|| Error::Parameter(format!("scene index {index} out of range ({} scenes)", scenes.len())))?;
            match (checkpoint, vocab) {
                (Some(c), Some(v)) => {
                    let ckpt = Checkpoint::load(&c)?;
                    let vocab = Vocabulary::load(&v)?;
                    let d = plan_scene(mode, &vocab, &ckpt.planner, scene, &ckpt.config.score_weights, eval_seed)?;
                    plot_scene(scene, Some(&d.set), Some(d.index), &out)?;
                }
                (None, None) => plot_scene(scene, None, None, &out)?,
                _ => return Err(Error::Parameter("--checkpoint and --vocab go together".into())),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Contract(_) => 3,
                Error::Divergence { .. } => 4,
                _ => 2,
            })
        }
    }
}
