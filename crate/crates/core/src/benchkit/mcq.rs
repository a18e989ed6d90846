use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use numkit::SplitMix64;

use super::types::{bucketize, normalize, Letter, McqItem};
use crate::dataforge::{Conversation, QaSample, QuestionKind};
use crate::error::{invalid, Result};

/// Answers grouped by question kind, used as same-type distractors.
#[derive(Clone, Debug, Default)]
pub struct DistractorPool {
    /// kind -> `(video_id, narration index, answer)`, in input order.
    by_kind: HashMap<QuestionKind, Vec<(String, usize, String)>>,
}

impl DistractorPool {
    pub fn from_conversations(conversations: &[Conversation]) -> Self {
        let mut by_kind: HashMap<QuestionKind, Vec<(String, usize, String)>> = HashMap::new();
        for c in conversations {
            for q in &c.qa {
                by_kind.entry(q.kind).or_default().push((c.video_id.clone(), q.source_narration_idx, q.answer.clone()));
            }
        }
        Self { by_kind }
    }

    /// Answers of the same kind from other narrations: same video first, then the
    /// rest, each group in seeded order.
    fn candidates(&self, video_id: &str, sample: &QaSample, rng: &mut SplitMix64) -> Vec<&str> {
        let Some(all) = self.by_kind.get(&sample.kind) else { return Vec::new() };
        let other_clip = |v: &&(String, usize, String)| !(v.0 == video_id && v.1 == sample.source_narration_idx);
        let mut same: Vec<&str> =
            all.iter().filter(|v| v.0 == video_id).filter(other_clip).map(|v| v.2.as_str()).collect();
        let mut rest: Vec<&str> = all.iter().filter(|v| v.0 != video_id).map(|v| v.2.as_str()).collect();
        same.shuffle(rng);
        rest.shuffle(rng);
        same.extend(rest);
        same
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McqConfig {
    pub seed: u64,
    /// Questions kept per video, in conversation order.
    pub max_per_video: usize,
    /// Candidate distractors examined before giving up on an item.
    pub distractor_budget: usize,
}

impl Default for McqConfig {
    fn default() -> Self {
        Self { seed: 0, max_per_video: 12, distractor_budget: 64 }
    }
}

/// Builds one MCQ: three distractors that differ from the answer and from each
/// other after normalization, shuffled with the answer by a seed tied to the id.
pub fn make_mcq(
    question_id: &str,
    conversation: &Conversation,
    sample: &QaSample,
    pool: &DistractorPool,
    cfg: &McqConfig,
) -> Result<McqItem> {
    let (minutes_bucket, class) = bucketize(conversation.duration_s)?;
    let mut rng = SplitMix64::derive(cfg.seed, question_id);
    let answer_key = normalize(&sample.answer);
    if answer_key.is_empty() {
        return Err(invalid(format!("{question_id}: answer is empty after normalization")));
    }
    let mut keys = vec![answer_key];
    let mut distractors = Vec::with_capacity(3);
    for cand in pool.candidates(&conversation.video_id, sample, &mut rng).into_iter().take(cfg.distractor_budget) {
        let key = normalize(cand);
        if key.is_empty() || keys.contains(&key) {
            continue;
        }
        keys.push(key);
        distractors.push(cand.to_string());
        if distractors.len() == 3 {
            break;
        }
    }
    if distractors.len() < 3 {
        return Err(invalid(format!("{question_id}: only {} distinct distractors within budget", distractors.len())));
    }
    let mut options: Vec<String> = std::iter::once(sample.answer.clone()).chain(distractors).collect();
    options.shuffle(&mut rng);
    let correct = Letter::from_index(options.iter().position(|o| *o == sample.answer).expect("answer is an option"))?;
    Ok(McqItem {
        question_id: question_id.to_string(),
        video_id: conversation.video_id.clone(),
        question: sample.question.clone(),
        options: options.try_into().expect("four options"),
        correct,
        minutes_bucket,
        class,
        duration_s: conversation.duration_s,
        keyframe_indices: sample.keyframe_indices.clone(),
    })
}

/// Moves each item's answer to a target letter so that per-letter counts differ
/// by at most one: targets cycle A..D over a seeded permutation of the items.
pub fn balance_letters(items: &mut [McqItem], seed: u64) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut SplitMix64::derive(seed, "letters"));
    for (slot, &i) in order.iter().enumerate() {
        let target = Letter::ALL[slot % 4];
        let it = &mut items[i];
        it.options.swap(it.correct.index(), target.index());
        it.correct = target;
    }
}

pub fn letter_counts(items: &[McqItem]) -> [usize; 4] {
    let mut c = [0; 4];
    for it in items {
        c[it.correct.index()] += 1;
    }
    c
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub items: usize,
    pub skipped_yes_no: usize,
    pub skipped_duration: usize,
    pub skipped_distractors: usize,
    pub truncated: usize,
}

/// Converts conversations into a letter-balanced benchmark. Yes/no questions are
/// skipped because they have no four-way option set.
pub fn build_benchmark(conversations: &[Conversation], cfg: &McqConfig) -> Result<(Vec<McqItem>, BuildReport)> {
    let pool = DistractorPool::from_conversations(conversations);
    let mut report = BuildReport::default();
    let mut jobs = Vec::new();
    for c in conversations {
        if bucketize(c.duration_s).is_err() {
            report.skipped_duration += 1;
            continue;
        }
        let usable: Vec<(usize, &QaSample)> =
            c.qa.iter().enumerate().filter(|(_, q)| q.kind != QuestionKind::Did).collect();
        report.skipped_yes_no += c.qa.len() - usable.len();
        report.truncated += usable.len().saturating_sub(cfg.max_per_video);
        for (j, q) in usable.into_iter().take(cfg.max_per_video) {
            jobs.push((format!("{}-q{j:02}", c.video_id), c, q));
        }
    }
    let built: Vec<Result<McqItem>> = jobs.par_iter().map(|(id, c, q)| make_mcq(id, c, q, &pool, cfg)).collect();
    let mut items = Vec::with_capacity(built.len());
    for b in built {
        match b {
            Ok(it) => items.push(it),
            Err(e) => {
                log::warn!("{e}");
                report.skipped_distractors += 1;
            }
        }
    }
    balance_letters(&mut items, SplitMix64::derive(cfg.seed, "balance").next_u64());
    report.items = items.len();
    Ok((items, report))
}
