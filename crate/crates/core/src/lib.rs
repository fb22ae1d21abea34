pub mod ablate;
pub mod config;
pub mod decision;
pub mod diffusion;
pub mod error;
pub mod hatna;
pub mod io;
pub mod losses;
pub mod model;
pub mod nn;
pub mod planner;
pub mod plot;
pub mod scene;
pub mod traj;
pub mod train;
pub mod vocab;
pub mod world_model;

pub use error::{Error, Result};
