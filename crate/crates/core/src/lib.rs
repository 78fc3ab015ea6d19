//! Learning local forward models of Sokoban.
//!
//! The crate holds the game engine and level corpus, neighbourhood pattern
//! extraction, two local model learners (exact-match tables and decision
//! trees), a rolling horizon evolutionary agent that plans through any
//! forward model, an NTBEA parameter tuner, and the experiment harness tying
//! them together.

pub mod agent;
pub mod engine;
mod error;
pub mod experiment;
pub mod harness;
pub mod levels;
pub mod models;
pub mod patterns;
pub mod tuner;

pub use error::{Error, Result};
