use serde::{Deserialize, Serialize};

use super::paragraph::Paragraph;
use super::types::{NarratedVideo, QaSample};
use crate::embedkit::sample_frames;
use crate::error::{invalid, Result};

/// How a video is turned into the `N` frames the model sees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSampling {
    /// Source frame rate; source frame `i` sits at `i / fps` seconds.
    pub fps: f64,
    pub max_frames: usize,
}

impl Default for FrameSampling {
    fn default() -> Self {
        Self { fps: 1.0, max_frames: 300 }
    }
}

impl FrameSampling {
    /// Timestamps in seconds of the sampled frames, ascending.
    pub fn timestamps(&self, duration_s: f64) -> Result<Vec<f64>> {
        if !(self.fps > 0.0) || !(duration_s > 0.0) {
            return Err(invalid("fps and duration must be positive"));
        }
        let total = ((duration_s * self.fps).round() as usize).max(1);
        Ok(sample_frames(total, self.max_frames)?.into_iter().map(|i| i as f64 / self.fps).collect())
    }
}

/// Sampled frames with timestamps in `[start, end)`; if none, the single nearest
/// frame (ties to the lower index) and a set fallback flag.
pub fn frames_in_range(timestamps: &[f64], start: f64, end: f64) -> (Vec<usize>, bool) {
    let inside: Vec<usize> = (0..timestamps.len()).filter(|&i| timestamps[i] >= start && timestamps[i] < end).collect();
    if !inside.is_empty() || timestamps.is_empty() {
        return (inside, false);
    }
    let gap = |t: f64| if t < start { start - t } else { t - end };
    let nearest = (0..timestamps.len())
        .min_by(|&a, &b| gap(timestamps[a]).total_cmp(&gap(timestamps[b])).then(a.cmp(&b)))
        .unwrap_or(0);
    (vec![nearest], true)
}

/// Attaches the cited clip's span and the sampled frames inside it.
pub fn map_keyframes(
    mut sample: QaSample,
    video: &NarratedVideo,
    paragraph: &Paragraph,
    sampling: &FrameSampling,
) -> Result<QaSample> {
    let clip = paragraph.clip(video, sample.source_narration_idx)?;
    let ts = sampling.timestamps(video.duration_s)?;
    let (idx, fallback) = frames_in_range(&ts, clip.start_s, clip.end_s);
    sample.keyframe_time_range_s = Some((clip.start_s, clip.end_s));
    sample.keyframe_indices = idx;
    sample.keyframe_fallback = fallback;
    Ok(sample)
}
