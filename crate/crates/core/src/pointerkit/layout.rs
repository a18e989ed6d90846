//! Token-role layouts for the glimpse, fallback and training sequences.
//!
//! Layouts are plans: ordered segments with positions, built without touching any
//! tensors. [`super::model`] materializes them onto a tape. Positions are numbered
//! contiguously from 0 across the whole layout.

use std::collections::BTreeSet;

use numkit::Tensor;
use serde::{Deserialize, Serialize};

use super::scores::{anchor_set, KeyFrameSelection, SelectionSource};
use crate::error::{invalid, Error, Result};
use crate::microlm::{append_rows, Tokenizer, EOS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    CompressedVis,
    Question,
    Pointer,
    HighResVis,
    Answer,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SegmentContent {
    /// All `N` compressed frame embeddings, in frame order.
    Compressed(usize),
    /// The `T` high-res tokens of each listed frame, in list order.
    HighRes(Vec<usize>),
    Tokens(Vec<usize>),
    Pointer,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub role: Role,
    pub content: SegmentContent,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SequencePlan {
    pub segments: Vec<Segment>,
    pub len: usize,
}

impl SequencePlan {
    fn push(&mut self, role: Role, content: SegmentContent, len: usize) -> usize {
        let start = self.len;
        self.segments.push(Segment { role, content, start, len });
        self.len += len;
        start
    }

    pub fn roles(&self) -> Vec<Role> {
        self.segments.iter().map(|s| s.role).collect()
    }
}

/// One question-answer turn. Empty `keyframes` means the turn is unlabeled.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaTurn {
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub keyframes: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixMode {
    /// Prefix when every turn carries keyframe labels.
    #[default]
    Auto,
    Prefix,
    NoPrefix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingLayout {
    pub plan: SequencePlan,
    /// True exactly on answer-token positions.
    pub lm_loss_mask: Vec<bool>,
    /// Token id at each masked position, in position order.
    pub lm_targets: Vec<usize>,
    pub pointer_read_positions: Vec<usize>,
    pub vis_read_positions: Vec<usize>,
    /// One multi-hot vector of length `N` per question (empty without prefix).
    pub gt_keyframes: Vec<Vec<f64>>,
    pub selection: KeyFrameSelection,
    pub frames: usize,
    pub tokens_per_frame: usize,
}

impl TrainingLayout {
    pub fn has_prefix(&self) -> bool {
        !self.pointer_read_positions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.plan.len
    }

    pub fn is_empty(&self) -> bool {
        self.plan.len == 0
    }
}

/// The shared high-res selection for a labeled sample: the union of all turns'
/// keyframes, earliest first, truncated to `k`, then padded with unused anchors.
pub fn ground_truth_selection(turns: &[QaTurn], frames: usize, k: usize) -> Result<KeyFrameSelection> {
    let want = k.min(frames);
    let union: BTreeSet<usize> = turns.iter().flat_map(|t| t.keyframes.iter().copied()).collect();
    if let Some(&bad) = union.iter().find(|&&i| i >= frames) {
        return Err(invalid(format!("keyframe {bad} out of range for {frames} frames")));
    }
    let mut picked: BTreeSet<usize> = union.into_iter().take(want).collect();
    for a in anchor_set(frames, k)? {
        if picked.len() == want {
            break;
        }
        picked.insert(a);
    }
    for i in 0..frames {
        if picked.len() == want {
            break;
        }
        picked.insert(i);
    }
    KeyFrameSelection::new(picked.into_iter().collect(), SelectionSource::GroundTruth, frames)
}

/// Layout `[N compressed, (question, pointer)×Q, k high-res, (question, answer)×Q]`,
/// or `[k high-res, (question, answer)×Q]` without the prefix.
pub fn build_training_layout(
    turns: &[QaTurn],
    frames: usize,
    tokens_per_frame: usize,
    k: usize,
    mode: PrefixMode,
) -> Result<TrainingLayout> {
    if turns.is_empty() {
        return Err(invalid("a sample needs at least one question"));
    }
    if frames == 0 || tokens_per_frame == 0 || k == 0 {
        return Err(invalid("frames, tokens_per_frame and k must be positive"));
    }
    let labeled = turns.iter().all(|t| !t.keyframes.is_empty());
    let prefix = match mode {
        PrefixMode::Auto => labeled,
        PrefixMode::Prefix if !labeled => {
            return Err(invalid("prefix layout requested but a question has no keyframe labels"))
        }
        PrefixMode::Prefix => true,
        PrefixMode::NoPrefix => false,
    };
    let tok = Tokenizer;
    let questions: Vec<Vec<usize>> =
        turns.iter().map(|t| tok.encode_nonempty(&t.question)).collect::<Result<_>>()?;
    let answers: Vec<Vec<usize>> = turns
        .iter()
        .map(|t| {
            let mut ids = tok.encode_nonempty(&t.answer)?;
            ids.push(EOS);
            Ok(ids)
        })
        .collect::<Result<_>>()?;

    let mut plan = SequencePlan::default();
    let mut pointer_read_positions = Vec::new();
    let mut vis_read_positions = Vec::new();
    let mut gt_keyframes = Vec::new();
    let selection = if prefix {
        plan.push(Role::CompressedVis, SegmentContent::Compressed(frames), frames);
        vis_read_positions = (0..frames).collect();
        for (q, turn) in questions.iter().zip(turns) {
            plan.push(Role::Question, SegmentContent::Tokens(q.clone()), q.len());
            pointer_read_positions.push(plan.push(Role::Pointer, SegmentContent::Pointer, 1));
            let mut hot = vec![0.0; frames];
            for &i in &turn.keyframes {
                if i >= frames {
                    return Err(invalid(format!("keyframe {i} out of range for {frames} frames")));
                }
                hot[i] = 1.0;
            }
            gt_keyframes.push(hot);
        }
        ground_truth_selection(turns, frames, k)?
    } else {
        super::scores::uniform_selection(frames, k)?
    };
    plan.push(
        Role::HighResVis,
        SegmentContent::HighRes(selection.indices.clone()),
        selection.len() * tokens_per_frame,
    );
    let mut lm_targets = Vec::new();
    for (q, a) in questions.iter().zip(&answers) {
        plan.push(Role::Question, SegmentContent::Tokens(q.clone()), q.len());
        plan.push(Role::Answer, SegmentContent::Tokens(a.clone()), a.len());
        lm_targets.extend_from_slice(a);
    }
    let mut lm_loss_mask = vec![false; plan.len];
    for s in plan.segments.iter().filter(|s| s.role == Role::Answer) {
        lm_loss_mask[s.start..s.start + s.len].iter_mut().for_each(|m| *m = true);
    }
    Ok(TrainingLayout {
        plan,
        lm_loss_mask,
        lm_targets,
        pointer_read_positions,
        vis_read_positions,
        gt_keyframes,
        selection,
        frames,
        tokens_per_frame,
    })
}

/// `[E_vis^1..E_vis^N, E_que, P]`.
pub fn glimpse_plan(frames: usize, question: Vec<usize>) -> Result<SequencePlan> {
    if frames == 0 {
        return Err(invalid("glimpse needs at least one frame"));
    }
    let mut plan = SequencePlan::default();
    plan.push(Role::CompressedVis, SegmentContent::Compressed(frames), frames);
    let q = question.len();
    plan.push(Role::Question, SegmentContent::Tokens(question), q);
    plan.push(Role::Pointer, SegmentContent::Pointer, 1);
    Ok(plan)
}

/// `[V^{S_1}..V^{S_k}, E_que]` with frames in ascending temporal order.
pub fn fallback_plan(selection: &KeyFrameSelection, tokens_per_frame: usize, question: Vec<usize>) -> SequencePlan {
    let mut frames = selection.indices.clone();
    frames.sort_unstable();
    let mut plan = SequencePlan::default();
    let n = frames.len() * tokens_per_frame;
    plan.push(Role::HighResVis, SegmentContent::HighRes(frames), n);
    let q = question.len();
    plan.push(Role::Question, SegmentContent::Tokens(question), q);
    plan
}

/// An assembled glimpse sequence with its read positions.
#[derive(Clone, Debug, PartialEq)]
pub struct GlimpseSequence {
    pub embeddings: Tensor,
    pub vis_positions: Vec<usize>,
    pub pointer_position: usize,
}

pub fn assemble_glimpse(
    compressed: &Tensor,
    question: &Tensor,
    pointer: &Tensor,
    max_positions: usize,
) -> Result<GlimpseSequence> {
    let n = compressed.rows();
    if n == 0 {
        return Err(invalid("glimpse needs at least one frame"));
    }
    if pointer.len() != compressed.cols() {
        return Err(invalid("pointer width differs from the embedding width"));
    }
    let len = n + question.rows() + 1;
    if len > max_positions {
        return Err(Error::ContextOverflow { needed: len, max: max_positions });
    }
    let p = pointer.clone().reshape(&[1, compressed.cols()])?;
    let embeddings = append_rows(&append_rows(compressed, question)?, &p)?;
    Ok(GlimpseSequence { embeddings, vis_positions: (0..n).collect(), pointer_position: len - 1 })
}

/// Selected high-res frames (`N × T × C`) in temporal order, followed by the question.
pub fn assemble_fallback(high_res: &Tensor, selection: &KeyFrameSelection, question: &Tensor) -> Result<Tensor> {
    if high_res.rank() != 3 {
        return Err(invalid("high-res embeddings must be N x T x C"));
    }
    let (n, t, c) = (high_res.shape()[0], high_res.shape()[1], high_res.shape()[2]);
    let mut frames = selection.indices.clone();
    frames.sort_unstable();
    let mut data = Vec::with_capacity((frames.len() * t + question.rows()) * c);
    for &f in &frames {
        if f >= n {
            return Err(invalid(format!("selected frame {f} out of {n}")));
        }
        data.extend_from_slice(&high_res.data()[f * t * c..(f + 1) * t * c]);
    }
    let vis = Tensor::new(vec![frames.len() * t, c], data)?;
    append_rows(&vis, question)
}
