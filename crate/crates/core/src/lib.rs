//! Question-aware key-frame selection for long egocentric video QA: visual
//! embeddings, a small causal LM, pointer-based frame selection, the narration
//! data engine, MCQ benchmark construction and debiased evaluation.

pub mod benchkit;
pub mod dataforge;
pub mod embedkit;
pub mod evalharness;
pub mod jsonl;
pub mod microlm;
pub mod pointerkit;
pub mod toytask;
mod error;

pub use error::{Error, Result};
