//! The full model: projector, LM and the learnable pointer embedding sharing one
//! parameter store, plus the two-step inference and the training loss graph.

use std::fs;
use std::path::Path;

use numkit::{Bound, ParamStore, SplitMix64, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::layout::{assemble_fallback, assemble_glimpse, Role, SegmentContent, TrainingLayout};
use super::scores::{
    anchor_vector, correlation_scores, score_and_select, uniform_selection, CorrelationScores, KeyFrameSelection,
};
use crate::embedkit::{compress, init_projector, project_and_pool, tokens_per_frame, FeatureMaps, FrameEmbeddings};
use crate::error::{invalid, Result};
use crate::microlm::{embed_tokens, forward, logits, LmConfig, LossVars, MicroLm, Tokenizer, EOS};

pub const POINTER: &str = "pointer";
pub const MODEL_FILE: &str = "mmego.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmEgoConfig {
    pub lm: LmConfig,
    /// Width of the encoder feature maps fed to the projector.
    pub enc_dim: usize,
    pub grid: usize,
    pub max_frames: usize,
    pub k: usize,
    pub alpha: f64,
    /// Divides the pointer dot products before the softmax.
    pub temperature: f64,
    pub pointer_weight: f64,
    pub pointer_supervision: bool,
    pub max_answer_tokens: usize,
}

impl Default for MmEgoConfig {
    fn default() -> Self {
        Self {
            lm: LmConfig::default(),
            enc_dim: 32,
            grid: 6,
            max_frames: 300,
            k: 32,
            alpha: 0.1,
            temperature: 1.0,
            pointer_weight: 1.0,
            pointer_supervision: true,
            max_answer_tokens: 32,
        }
    }
}

impl MmEgoConfig {
    pub fn validate(&self) -> Result<()> {
        self.lm.validate()?;
        tokens_per_frame(self.grid)?;
        if self.enc_dim == 0 || self.max_frames == 0 || self.k == 0 {
            return Err(invalid("enc_dim, max_frames and k must be positive"));
        }
        if !(self.temperature > 0.0) || !(self.alpha >= 0.0) || !(self.pointer_weight >= 0.0) {
            return Err(invalid("temperature must be positive; alpha and pointer_weight non-negative"));
        }
        Ok(())
    }

    pub fn tokens_per_frame(&self) -> usize {
        (self.grid / 2) * (self.grid / 2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Pointer scores mixed with the anchor vector.
    Pointer,
    /// Evenly spaced frames, ignoring the scores.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InferOptions {
    pub k: usize,
    pub alpha: f64,
    pub policy: SelectionPolicy,
}

/// Glimpse-pass readout for one question.
#[derive(Clone, Debug, PartialEq)]
pub struct Glimpse {
    /// Stacked processed visual states, `N × C`.
    pub ebar: Tensor,
    pub pointer_state: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceOutput {
    pub answer: String,
    pub scores: CorrelationScores,
    pub selection: KeyFrameSelection,
    pub glimpse: Glimpse,
}

#[derive(Clone, Debug)]
pub struct MmEgo {
    pub config: MmEgoConfig,
    pub lm: MicroLm,
}

impl MmEgo {
    pub fn new(config: MmEgoConfig) -> Result<Self> {
        config.validate()?;
        let mut lm = MicroLm::new(config.lm.clone())?;
        init_projector(&mut lm.params, config.enc_dim, config.lm.model_dim, config.lm.seed);
        let mut rng = SplitMix64::derive(config.lm.seed, "pointer");
        lm.params.insert(POINTER, Tensor::randn(&[1, config.lm.model_dim], 0.1, &mut rng));
        lm.params.round_to_f32();
        Ok(Self { config, lm })
    }

    pub fn params(&self) -> &ParamStore {
        &self.lm.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.lm.params
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.lm.save(dir)?;
        fs::write(dir.join(MODEL_FILE), serde_json::to_string_pretty(&self.config)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config: MmEgoConfig = serde_json::from_str(&fs::read_to_string(dir.join(MODEL_FILE))?)?;
        config.validate()?;
        let lm = MicroLm::load(dir)?;
        lm.params.get(POINTER)?;
        Ok(Self { config, lm })
    }

    pub fn embed(&self, features: &FeatureMaps, frame_indices: Vec<usize>) -> Result<FrameEmbeddings> {
        if features.grid != self.config.grid || features.dim != self.config.enc_dim {
            return Err(invalid(format!(
                "features are {}x{}x{}, model expects grid {} and width {}",
                features.grid, features.grid, features.dim, self.config.grid, self.config.enc_dim
            )));
        }
        if features.frames > self.config.max_frames {
            return Err(invalid(format!("{} frames exceed the {} frame limit", features.frames, self.config.max_frames)));
        }
        FrameEmbeddings::from_features(&self.lm.params, features, frame_indices)
    }

    /// First pass: scores every frame against the pointer for `question`.
    pub fn glimpse(&self, emb: &FrameEmbeddings, question: &str) -> Result<Glimpse> {
        let q = self.lm.embed_text(question)?;
        let g = assemble_glimpse(&emb.compressed, &q, self.lm.params.get(POINTER)?, self.config.lm.max_positions)?;
        let out = self.lm.forward(&g.embeddings, 0)?;
        let c = self.config.lm.model_dim;
        let n = g.vis_positions.len();
        let ebar = Tensor::new(vec![n, c], out.last_layer_states.data()[..n * c].to_vec())?;
        let pointer_state = out.last_layer_states.row(g.pointer_position).to_vec();
        let s = correlation_scores(ebar.data(), n, &pointer_state, self.config.temperature)?;
        Ok(Glimpse { ebar, pointer_state, s })
    }

    fn choose(&self, s: Vec<f64>, opts: InferOptions) -> Result<(CorrelationScores, KeyFrameSelection)> {
        let (scores, pointer_sel) = score_and_select(s, opts.k, opts.alpha)?;
        let sel = match opts.policy {
            SelectionPolicy::Pointer => pointer_sel,
            SelectionPolicy::Uniform => uniform_selection(scores.s.len(), opts.k)?,
        };
        Ok((scores, sel))
    }

    /// Fallback prefix (selected high-res frames then the question) and its start position,
    /// which continues directly after the glimpse sequence.
    fn fallback_prefix(&self, emb: &FrameEmbeddings, sel: &KeyFrameSelection, question: &str) -> Result<(Tensor, usize)> {
        let q = self.lm.embed_text(question)?;
        let start = emb.frames() + q.rows() + 1;
        Ok((assemble_fallback(&emb.high_res, sel, &q)?, start))
    }

    pub fn infer(&self, emb: &FrameEmbeddings, question: &str, opts: InferOptions) -> Result<InferenceOutput> {
        let glimpse = self.glimpse(emb, question)?;
        let (scores, selection) = self.choose(glimpse.s.clone(), opts)?;
        let (prefix, start) = self.fallback_prefix(emb, &selection, question)?;
        let answer = self.lm.generate(&prefix, start, self.config.max_answer_tokens)?;
        Ok(InferenceOutput { answer, scores, selection, glimpse })
    }

    /// Log-likelihood of each option text (plus EOS) as the answer. Without
    /// embeddings the question alone is the prefix.
    pub fn option_logprobs(
        &self,
        emb: Option<&FrameEmbeddings>,
        question: &str,
        options: &[String],
        opts: InferOptions,
    ) -> Result<Vec<f64>> {
        let (prefix, start) = match emb {
            Some(e) => {
                let g = self.glimpse(e, question)?;
                let (_, sel) = self.choose(g.s, opts)?;
                self.fallback_prefix(e, &sel, question)?
            }
            None => (self.lm.embed_text(question)?, 0),
        };
        let tok = Tokenizer;
        options
            .iter()
            .map(|o| {
                let mut ids = tok.encode_nonempty(o)?;
                ids.push(EOS);
                self.lm.continuation_logprob(&prefix, start, &ids)
            })
            .collect()
    }

    /// Anchor-only scores for a glimpse `s` (for reporting).
    pub fn mix(&self, s: &[f64], k: usize, alpha: f64) -> Result<Vec<f64>> {
        let (u, _) = anchor_vector(s.len(), k, alpha)?;
        Ok(s.iter().zip(&u).map(|(a, b)| a + b).collect())
    }
}

/// One training sample: encoder features plus its layout plan.
#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub features: FeatureMaps,
    pub layout: TrainingLayout,
}

/// Builds the layout onto `tape` and returns `lm + λ·pointer`.
pub fn training_loss(tape: &mut Tape<'_>, params: &Bound, cfg: &MmEgoConfig, ex: &TrainingExample) -> Result<LossVars> {
    let layout = &ex.layout;
    let t = tokens_per_frame(ex.features.grid)?;
    if t != layout.tokens_per_frame || ex.features.frames != layout.frames {
        return Err(invalid("layout does not match the feature maps"));
    }
    let hr = project_and_pool(tape, params, &ex.features)?;
    let comp = if layout.has_prefix() { Some(compress(tape, hr, layout.frames, t)?) } else { None };

    let mut parts = Vec::with_capacity(layout.plan.segments.len());
    for seg in &layout.plan.segments {
        let v = match &seg.content {
            SegmentContent::Compressed(_) => comp.ok_or_else(|| invalid("compressed segment without prefix"))?,
            SegmentContent::HighRes(frames) => {
                let rows: Vec<usize> = frames.iter().flat_map(|&f| f * t..(f + 1) * t).collect();
                tape.gather_rows(hr, &rows)?
            }
            SegmentContent::Tokens(ids) => embed_tokens(tape, params, ids)?,
            SegmentContent::Pointer => params.var(POINTER)?,
        };
        parts.push(v);
    }
    let x = tape.concat_rows(&parts)?;
    let states = forward(tape, params, &cfg.lm, x, 0)?;

    let rows: Vec<usize> = layout
        .lm_loss_mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(p, _)| p - 1)
        .collect();
    let read = tape.gather_rows(states, &rows)?;
    let lg = logits(tape, params, read)?;
    let lm = tape.cross_entropy(lg, &layout.lm_targets, &vec![true; rows.len()])?;
    let lm_value = tape.value(lm).item();
    if !layout.has_prefix() {
        return Ok(LossVars { total: lm, lm: lm_value, pointer: 0.0 });
    }

    let ptr = pointer_loss(tape, states, layout, cfg.temperature)?;
    let ptr_value = tape.value(ptr).item();
    let total = if cfg.pointer_supervision && cfg.pointer_weight > 0.0 {
        let w = tape.scale(ptr, cfg.pointer_weight)?;
        tape.add(lm, w)?
    } else {
        lm
    };
    Ok(LossVars { total, lm: lm_value, pointer: ptr_value })
}

/// Mean over questions of BCE(softmax(Ē·P′ᵀ / temperature), multi-hot labels).
pub fn pointer_loss(tape: &mut Tape<'_>, states: Var, layout: &TrainingLayout, temperature: f64) -> Result<Var> {
    if !layout.has_prefix() {
        return Err(invalid("pointer loss needs a layout with the glimpse prefix"));
    }
    let ebar = tape.gather_rows(states, &layout.vis_read_positions)?;
    let ebar_t = tape.transpose(ebar)?;
    let n = layout.vis_read_positions.len();
    let mut losses = Vec::with_capacity(layout.pointer_read_positions.len());
    for (&p, hot) in layout.pointer_read_positions.iter().zip(&layout.gt_keyframes) {
        let pv = tape.gather_rows(states, &[p])?;
        let dots = tape.matmul(pv, ebar_t)?;
        let dots = tape.reshape(dots, &[n])?;
        let dots = tape.scale(dots, 1.0 / temperature)?;
        let s = tape.softmax(dots)?;
        losses.push(tape.bce_loss(s, hot)?);
    }
    Ok(tape.mean_scalars(&losses)?)
}

/// Role of every position in a layout, for inspection.
pub fn position_roles(layout: &TrainingLayout) -> Vec<Role> {
    layout.plan.segments.iter().flat_map(|s| std::iter::repeat(s.role).take(s.len)).collect()
}
