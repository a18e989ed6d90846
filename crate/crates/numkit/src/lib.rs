//! Minimal dense-tensor and reverse-mode autograd substrate.
//!
//! Everything is `f64`, row-major, with no broadcasting beyond what the ops need.
//! [`Tape`] records ops and replays them backwards; [`grad_check`] compares its
//! gradients against central finite differences; [`ParamStore`] holds named
//! parameters and reads/writes the manifest + `f32` blob checkpoint format.

mod error;
mod gradcheck;
mod params;
mod rng;
mod tape;
mod tensor;

pub use error::{NumError, Result};
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckResult};
pub use params::{Bound, ParamStore, BLOB_FILE, MANIFEST_FILE};
pub use rng::SplitMix64;
pub use tape::{Gradients, Tape, Var, BCE_EPS};
pub use tensor::Tensor;
