//! Narration-to-QA data engine: chronological paragraphs, pluggable QA
//! generation, narration-index to keyframe mapping, and length balancing.

mod balance;
mod keyframes;
mod paragraph;
mod remote;
mod synth;
mod template;
mod types;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use numkit::SplitMix64;

pub use balance::{balance, bucket_of, BalanceConfig, BalanceReport};
pub use keyframes::{frames_in_range, map_keyframes, FrameSampling};
pub use paragraph::{assemble_paragraph, Paragraph};
pub use remote::{parse_response, RemoteBackend, RemoteConfig};
pub use synth::{synth_narrated_videos, synth_narration, SYNTH_DURATIONS};
pub use template::{base_form, candidates, confident, generate_template, parse_action, strip_actor, Action};
pub use types::{Clip, Conversation, NarratedVideo, QaSample, QuestionKind};

use crate::error::{invalid, Result};

pub enum Backend {
    Template,
    Remote(RemoteBackend),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgeConfig {
    pub n_questions: usize,
    pub seed: u64,
    pub sampling: FrameSampling,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self { n_questions: 12, seed: 0, sampling: FrameSampling::default() }
    }
}

/// QA pairs for one paragraph, each citing an existing sentence.
pub fn generate_qa(paragraph: &Paragraph, backend: &Backend, n_questions: usize, seed: u64) -> Result<Vec<QaSample>> {
    let qa = match backend {
        Backend::Template => generate_template(paragraph, n_questions, seed),
        Backend::Remote(r) => r.generate(paragraph, n_questions)?,
    };
    for q in &qa {
        paragraph.slot(q.source_narration_idx)?;
    }
    Ok(qa)
}

fn video_seed(seed: u64, video_id: &str) -> u64 {
    SplitMix64::derive(seed, video_id).next_u64()
}

/// Paragraph, QA generation and keyframe mapping for one video.
pub fn forge_video(video: &NarratedVideo, backend: &Backend, cfg: &ForgeConfig) -> Result<Conversation> {
    video.validate()?;
    let paragraph = assemble_paragraph(video)?;
    let qa = generate_qa(&paragraph, backend, cfg.n_questions, video_seed(cfg.seed, &video.video_id))?;
    let qa = qa
        .into_iter()
        .map(|q| map_keyframes(q, video, &paragraph, &cfg.sampling))
        .collect::<Result<Vec<_>>>()?;
    Ok(Conversation { video_id: video.video_id.clone(), duration_s: video.duration_s, qa })
}

/// Forges every video in parallel; output is sorted by `video_id` and skips
/// videos that yield no QA pairs.
pub fn forge(videos: &[NarratedVideo], backend: &Backend, cfg: &ForgeConfig) -> Result<Vec<Conversation>> {
    let ids: HashSet<&str> = videos.iter().map(|v| v.video_id.as_str()).collect();
    if ids.len() != videos.len() {
        return Err(invalid("duplicate video_id in input"));
    }
    let run = || videos.par_iter().map(|v| forge_video(v, backend, cfg)).collect::<Result<Vec<_>>>();
    let mut out = match backend {
        Backend::Remote(r) => rayon::ThreadPoolBuilder::new()
            .num_threads(r.config().max_in_flight.max(1))
            .build()
            .map_err(|e| invalid(e.to_string()))?
            .install(run)?,
        Backend::Template => run()?,
    };
    out.retain(|c| {
        if c.qa.is_empty() {
            log::warn!("{}: no QA pairs generated", c.video_id);
        }
        !c.qa.is_empty()
    });
    out.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    Ok(out)
}

/// Reads every `*.json` file in `dir` as one narrated video, in file-name order.
pub fn load_narrations(dir: &Path) -> Result<Vec<NarratedVideo>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?)?))
        .collect()
}

/// One id per non-blank line.
pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub train: Vec<Conversation>,
    pub test: Vec<Conversation>,
    pub unassigned: Vec<Conversation>,
}

/// Partitions by video id lists; an id in both lists is an error.
pub fn split_by_ids(conversations: Vec<Conversation>, train_ids: &[String], test_ids: &[String]) -> Result<Split> {
    let train: HashSet<&str> = train_ids.iter().map(String::as_str).collect();
    let test: HashSet<&str> = test_ids.iter().map(String::as_str).collect();
    if let Some(id) = train.intersection(&test).next() {
        return Err(invalid(format!("{id} is listed for both train and test")));
    }
    let mut split = Split::default();
    for c in conversations {
        if train.contains(c.video_id.as_str()) {
            split.train.push(c);
        } else if test.contains(c.video_id.as_str()) {
            split.test.push(c);
        } else {
            split.unassigned.push(c);
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forge_is_deterministic_and_sorted() {
        let mut videos = synth_narrated_videos(12, 5);
        videos.reverse();
        let cfg = ForgeConfig { n_questions: 6, seed: 9, sampling: FrameSampling { fps: 1.0, max_frames: 64 } };
        let a = forge(&videos, &Backend::Template, &cfg).unwrap();
        let b = forge(&videos, &Backend::Template, &cfg).unwrap();
        assert_eq!(crate::jsonl::to_jsonl_string(&a).unwrap(), crate::jsonl::to_jsonl_string(&b).unwrap());
        assert!(a.windows(2).all(|w| w[0].video_id < w[1].video_id));
        for c in &a {
            assert!(c.qa.len() <= 6);
            assert!(c.qa.iter().all(|q| !q.keyframe_indices.is_empty()));
        }
    }

    #[test]
    fn split_by_lists() {
        let c = |id: &str| Conversation { video_id: id.into(), duration_s: 1.0, qa: vec![] };
        let s = split_by_ids(vec![c("a"), c("b"), c("z")], &["a".into()], &["b".into()]).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.unassigned.len()), (1, 1, 1));
        assert!(split_by_ids(vec![], &["a".into()], &["a".into()]).is_err());
    }
}
