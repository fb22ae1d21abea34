#![allow(dead_code)]

use cddrive::config::RunConfig;
use cddrive::planner::Planner;
use cddrive::scene::corpus::generate_corpus;
use cddrive::scene::Scene;
use cddrive::vocab::{build_vocabulary, Vocabulary};

pub fn small_config(k: usize) -> RunConfig {
    let mut c = RunConfig::default();
    c.data.vocab_size = k;
    c.model.hidden = 32;
    c
}

pub fn corpus(start: u64, count: usize) -> Vec<Scene> {
    generate_corpus(start, count, 0.5).unwrap().scenes
}

pub fn vocab_from(scenes: &[Scene], k: usize) -> Vocabulary {
    let experts: Vec<_> = scenes.iter().map(|s| s.expert.clone()).collect();
    build_vocabulary(&experts, k, 7).unwrap()
}

pub fn planner(c: &RunConfig) -> Planner {
    Planner::new(&c.model, c.seed).unwrap()
}
