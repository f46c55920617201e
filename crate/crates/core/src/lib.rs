//! Fence removal from multiple shifted frames.
//!
//! The pipeline detects fence joints with a HOG + linear SVM (or a small CNN),
//! recovers the fence lattice and its mask, registers the frames, and fuses
//! the visible background into one image by MAP inference on a Markov random
//! field with loopy belief propagation.

pub mod classifier;
pub mod cnn;
mod error;
pub mod evalsynth;
pub mod fusion;
pub mod hog;
pub mod imagecore;
pub mod lattice;
pub mod motion;

pub use error::{Error, Result};
