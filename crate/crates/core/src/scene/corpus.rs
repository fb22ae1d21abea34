//! Line-delimited JSON scene corpora.
//!
//! The first line is a header object
//! `{"format":"cddrive-scenes","version":1,"count":N,...}`; each following
//! line is one [`Scene`].

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{generate_scene, Difficulty, Scene};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CORPUS_FORMAT: &str = "cddrive-scenes";
pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub format: String,
    pub version: u32,
    pub count: usize,
    pub seed_start: u64,
    pub interactive_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub header: CorpusHeader,
    pub scenes: Vec<Scene>,
}

/// Whether the `i`-th scene of a corpus is interactive; spreads exactly
/// `round-down(count * fraction)` interactive scenes evenly.
pub fn is_interactive(index: usize, fraction: f64) -> bool {
    let f = fraction.clamp(0.0, 1.0);
    ((index + 1) as f64 * f).floor() > (index as f64 * f).floor()
}

/// Scenes with seeds `seed_start..seed_start + count`.
pub fn generate_corpus(seed_start: u64, count: usize, interactive_fraction: f64) -> Result<Corpus> {
    let scenes = (0..count)
        .map(|i| {
            let d = if is_interactive(i, interactive_fraction) {
                Difficulty::Interactive
            } else {
                Difficulty::Routine
            };
            generate_scene(seed_start + i as u64, d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        header: CorpusHeader {
            format: CORPUS_FORMAT.into(),
            version: CORPUS_VERSION,
            count,
            seed_start,
            interactive_fraction,
        },
        scenes,
    })
}

impl Corpus {
    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        serde_json::to_writer(&mut out, &self.header)?;
        out.push(b'\n');
        for s in &self.scenes {
            serde_json::to_writer(&mut out, s)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_jsonl()?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let f = fs::File::open(path)?;
        Self::from_reader(BufReader::new(f))
    }

    pub fn from_reader(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Format("empty corpus file".into()))??;
        let header: CorpusHeader = serde_json::from_str(&header_line)?;
        if header.format != CORPUS_FORMAT || header.version != CORPUS_VERSION {
            return Err(Error::Format(format!(
                "unsupported corpus {} v{}",
                header.format, header.version
            )));
        }
        let mut scenes = Vec::with_capacity(header.count);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            scenes.push(serde_json::from_str(&line)?);
        }
        if scenes.len() != header.count {
            return Err(Error::Format(format!(
                "header announces {} scenes, found {}",
                header.count,
                scenes.len()
            )));
        }
        Ok(Self { header, scenes })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_jsonl()?)?;
        Ok(())
    }
}
