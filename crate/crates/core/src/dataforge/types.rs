use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub clip_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub narration: String,
}

/// One narrated video as read from its JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NarratedVideo {
    pub video_id: String,
    pub duration_s: f64,
    pub clips: Vec<Clip>,
}

impl NarratedVideo {
    /// Checks clip spans; clip order is not required here.
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(invalid(format!("{}: duration must be positive", self.video_id)));
        }
        if self.clips.is_empty() {
            return Err(invalid(format!("{}: no clips", self.video_id)));
        }
        for c in &self.clips {
            if !(0.0 <= c.start_s && c.start_s < c.end_s && c.end_s <= self.duration_s) {
                return Err(invalid(format!(
                    "{}: clip {} span [{}, {}) is not inside [0, {}]",
                    self.video_id, c.clip_id, c.start_s, c.end_s, self.duration_s
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    What,
    Where,
    Did,
    /// Produced by a remote backend; no template shape.
    Open,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaSample {
    pub question: String,
    pub answer: String,
    /// 1-based index into the numbered paragraph.
    pub source_narration_idx: usize,
    pub kind: QuestionKind,
    pub keyframe_time_range_s: Option<(f64, f64)>,
    #[serde(default)]
    pub keyframe_indices: Vec<usize>,
    /// True when no sampled frame fell inside the range and the nearest was used.
    #[serde(default)]
    pub keyframe_fallback: bool,
}

/// One output record: all QA pairs for a video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub video_id: String,
    pub duration_s: f64,
    pub qa: Vec<QaSample>,
}
