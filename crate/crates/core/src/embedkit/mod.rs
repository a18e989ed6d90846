//! Frames to visual embeddings: uniform sampling, a deterministic mock encoder,
//! the projector with 2×2 spatial pooling, and per-frame compression.

mod encoder;
mod frames;
mod projector;
mod sampling;

pub use encoder::{EncoderConfig, FeatureMaps, MockEncoder};
pub use frames::{
    read_image_dir, read_raw_frames, synth_video, write_raw_frames, Frame, SynthPattern, SynthSpec, VideoFrames,
    RAW_MAGIC,
};
pub use projector::{
    compress, compress_values, init_projector, project_and_pool, tokens_per_frame, FrameEmbeddings,
};
pub use sampling::{linspace_round, sample_frames};

use crate::error::Result;

/// Samples up to `max_frames` frames of `video` and encodes them.
pub fn encode_video(video: &VideoFrames, encoder: &MockEncoder, max_frames: usize) -> Result<(Vec<usize>, FeatureMaps)> {
    let idx = sample_frames(video.len(), max_frames)?;
    let picked: Vec<Frame> = idx.iter().map(|&i| video.frames[i].clone()).collect();
    let maps = encoder.encode(&picked)?;
    Ok((idx, maps))
}
