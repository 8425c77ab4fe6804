//! Stimulus generation for three serial-processing probes: a geometric
//! oddball task built from a small constructive concept language, a
//! spline-blob numerosity task and a letter mental-rotation task.
//!
//! Everything here is deterministic: every random draw flows from a
//! [`rng::StimRng`] stream derived from a 64-bit seed and a label.

pub mod config;
pub mod dsl;
pub mod geometry;
pub mod manifest;
pub mod numerosity;
pub mod oddball;
pub mod raster;
pub mod rng;
pub mod rotation;
pub mod sink;

pub use config::GenerationConfig;
pub use dsl::{ConceptProgram, Family};
pub use geometry::{RealizedScene, Vec2};
pub use manifest::{Dataset, Task, TrialInfo};
pub use raster::{Panel, StimulusImage};
pub use rng::StimRng;
