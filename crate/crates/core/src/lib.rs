//! Environment side of rule-based visual reinforcement learning on jigsaw
//! puzzles.
//!
//! The crate turns an image corpus into full, pair and box puzzle questions,
//! renders their prompts, parses free-text model responses, and computes the
//! accuracy/format rewards together with GRPO advantages and objective
//! gradients. Model training and inference are left to the consumer.

pub mod error;
pub mod grpo;
pub mod harness;
pub mod imaging;
pub mod parsing;
pub mod prompting;
pub mod puzzle;
pub mod rng;
pub mod scoring;
pub mod taskgen;

pub use error::{Error, Result};
pub use puzzle::{Direction, GridSpec, Permutation, PositionIndex};
pub use taskgen::{GroundTruth, Mode, Question, TaskKind};
