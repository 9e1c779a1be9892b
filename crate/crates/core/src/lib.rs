//! Stackelberg equilibrium between grid generators (leaders) and renewable
//! microgrids (followers) coupled through a DC power-flow network.

pub mod cli;
pub mod engine;
pub mod error;
pub mod follower;
pub mod leader;
pub mod linalg;
pub mod network;
pub mod scenario;
pub mod structure;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
