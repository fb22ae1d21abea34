//! Renders a few scenes to SVG. With a `train_small` prefix the decided
//! candidate and its anchor are drawn too.
//!
//!     cargo run --example plot_scene -- /tmp/plots [/tmp/small]

use std::path::PathBuf;

use cddrive::decision::{plan_scene, Mode};
use cddrive::planner::Checkpoint;
use cddrive::plot::plot_scene;
use cddrive::scene::corpus::generate_corpus;
use cddrive::vocab::Vocabulary;

fn main() -> cddrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "plots".into()));
    let model = match args.next() {
        Some(p) => Some((Checkpoint::load(format!("{p}.ckpt.json"))?, Vocabulary::load(format!("{p}.vocab.json"))?)),
        None => None,
    };
    std::fs::create_dir_all(&dir)?;
    for (i, scene) in generate_corpus(1_000_000, 6, 0.5)?.scenes.iter().enumerate() {
        let path = dir.join(format!("scene_{i}.svg"));
        match &model {
            Some((c, v)) => {
                let d = plan_scene(Mode::Unified, v, &c.planner, scene, &c.config.score_weights, 1)?;
                plot_scene(scene, Some(&d.set), Some(d.index), &path)?;
            }
            None => plot_scene(scene, None, None, &path)?,
        }
        println!("{}", path.display());
    }
    Ok(())
}
