//! Occlusion-aware next-best-view planning for observing a partially
//! occluded person from a legged robot, together with the simulated world,
//! oracle perception and experiment harness used to evaluate it.

pub mod alignment;
pub mod elevation;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod rng;
pub mod scene;
pub mod scoring;
pub mod viewpoints;

pub use error::{Error, Result};
