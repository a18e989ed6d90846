use std::cmp::Ordering;

use super::types::{Clip, NarratedVideo};
use crate::error::{invalid, Result};

/// Chronologically ordered narrations, numbered from 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Paragraph {
    pub sentences: Vec<String>,
    /// `clip_order[i]` is the input position of the clip behind sentence `i + 1`.
    pub clip_order: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Paragraph {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// `"1. first\n2. second\n"`.
    pub fn text(&self) -> String {
        self.sentences.iter().enumerate().map(|(i, s)| format!("{}. {s}\n", i + 1)).collect()
    }

    /// The single 1-based to 0-based conversion point for narration indices.
    pub fn slot(&self, narration_idx: usize) -> Result<usize> {
        if narration_idx == 0 || narration_idx > self.sentences.len() {
            return Err(invalid(format!(
                "narration index {narration_idx} outside 1..={}",
                self.sentences.len()
            )));
        }
        Ok(narration_idx - 1)
    }

    pub fn clip<'v>(&self, video: &'v NarratedVideo, narration_idx: usize) -> Result<&'v Clip> {
        Ok(&video.clips[self.clip_order[self.slot(narration_idx)?]])
    }
}

fn chrono(a: &Clip, b: &Clip) -> Ordering {
    a.start_s
        .total_cmp(&b.start_s)
        .then(a.end_s.total_cmp(&b.end_s))
        .then_with(|| a.clip_id.cmp(&b.clip_id))
}

pub fn assemble_paragraph(video: &NarratedVideo) -> Result<Paragraph> {
    if video.clips.is_empty() {
        return Err(invalid(format!("{}: no clips to narrate", video.video_id)));
    }
    let mut order: Vec<usize> = (0..video.clips.len()).collect();
    order.sort_by(|&a, &b| chrono(&video.clips[a], &video.clips[b]));
    let mut sentences = Vec::with_capacity(order.len());
    let mut warnings = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        let c = &video.clips[i];
        let text = c.narration.trim();
        if text.is_empty() {
            return Err(invalid(format!("{}: clip {} has an empty narration", video.video_id, c.clip_id)));
        }
        if pos > 0 {
            let prev = &video.clips[order[pos - 1]];
            if c.start_s < prev.end_s {
                let w = format!("{}: clips {} and {} overlap", video.video_id, prev.clip_id, c.clip_id);
                log::warn!("{w}");
                warnings.push(w);
            }
        }
        sentences.push(text.to_string());
    }
    Ok(Paragraph { sentences, clip_order: order, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(id: &str, s: f64, e: f64, t: &str) -> Clip {
        Clip { clip_id: id.into(), start_s: s, end_s: e, narration: t.into() }
    }

    fn video(clips: Vec<Clip>) -> NarratedVideo {
        NarratedVideo { video_id: "v".into(), duration_s: 100.0, clips }
    }

    #[test]
    fn orders_by_start_and_numbers_from_one() {
        let v = video(vec![clip("c", 20.0, 30.0, "third"), clip("a", 0.0, 5.0, "first"), clip("b", 5.0, 9.0, "second")]);
        let p = assemble_paragraph(&v).unwrap();
        assert_eq!(p.text(), "1. first\n2. second\n3. third\n");
        assert_eq!(p.clip(&v, 3).unwrap().clip_id, "c");
        assert!(p.slot(0).is_err() && p.slot(4).is_err());
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn single_clip_overlap_and_empty() {
        let one = video(vec![clip("a", 0.0, 1.0, "#C C opens the door")]);
        assert_eq!(assemble_paragraph(&one).unwrap().text(), "1. #C C opens the door\n");
        let overlap = video(vec![clip("a", 0.0, 5.0, "x"), clip("b", 4.0, 6.0, "y")]);
        assert_eq!(assemble_paragraph(&overlap).unwrap().warnings.len(), 1);
        assert!(assemble_paragraph(&video(vec![clip("a", 0.0, 1.0, "  ")])).is_err());
        assert!(assemble_paragraph(&video(vec![])).is_err());
    }

    #[test]
    fn insensitive_to_input_order_and_idempotent() {
        let a = video(vec![clip("a", 0.0, 5.0, "one"), clip("b", 6.0, 9.0, "two"), clip("c", 9.0, 12.0, "three")]);
        let mut b = a.clone();
        b.clips.reverse();
        let (pa, pb) = (assemble_paragraph(&a).unwrap(), assemble_paragraph(&b).unwrap());
        assert_eq!(pa.text(), pb.text());
        let sorted = video(pa.clip_order.iter().map(|&i| a.clips[i].clone()).collect());
        assert_eq!(assemble_paragraph(&sorted).unwrap().text(), pa.text());
    }
}
