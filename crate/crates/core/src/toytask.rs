//! Synthetic feature-level videos where exactly one frame answers each question.
//!
//! Every video holds a few object frames; each carries an object code and a color
//! code in its encoder features, and all other frames are noise. Questions ask for
//! the color of one object, so the answer is readable only from that object's frame.

use numkit::{SplitMix64, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::benchkit::{bucketize, Letter, McqItem};
use crate::embedkit::FeatureMaps;
use crate::evalharness::VideoBank;
use crate::error::{invalid, Result};
use crate::microlm::{CosineSchedule, LmConfig, OptimizerConfig, OptimizerKind};
use crate::pointerkit::{
    build_training_layout, InferOptions, MmEgo, MmEgoConfig, PrefixMode, QaTurn, SelectionPolicy, TrainConfig,
    TrainingExample,
};

pub const OBJECTS: [&str; 4] = ["cup", "key", "phone", "book"];
/// Distinct first letters, so the first answer token identifies the color. Object
/// names end in distinct letters, so the last question token identifies the object.
pub const COLORS: [&str; 4] = ["red", "blue", "green", "white"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub frames: usize,
    pub grid: usize,
    pub enc_dim: usize,
    pub objects_per_video: usize,
    pub signal: f64,
    pub noise: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { frames: 48, grid: 2, enc_dim: 16, objects_per_video: 3, signal: 2.0, noise: 0.3 }
    }
}

#[derive(Clone, Debug)]
pub struct ToyVideo {
    pub video_id: String,
    pub features: FeatureMaps,
    /// `(frame, object, color)` per object frame, frames ascending.
    pub placements: Vec<(usize, usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyItem {
    pub video: usize,
    pub question: String,
    pub answer: String,
    pub keyframe: usize,
}

#[derive(Clone, Debug)]
pub struct ToyDataset {
    pub config: ToyConfig,
    pub videos: Vec<ToyVideo>,
    pub items: Vec<ToyItem>,
}

pub fn question_for(object: usize) -> String {
    format!("color of the {}", OBJECTS[object])
}

pub fn generate(config: &ToyConfig, videos: usize, seed: u64) -> Result<ToyDataset> {
    let (n, g, d) = (config.frames, config.grid, config.enc_dim);
    if d < OBJECTS.len() + COLORS.len() {
        return Err(invalid("enc_dim must hold the object and color codes"));
    }
    if config.objects_per_video == 0 || config.objects_per_video > OBJECTS.len().min(n) {
        return Err(invalid("objects_per_video out of range"));
    }
    let mut rng = SplitMix64::derive(seed, "toytask");
    let noise = Normal::new(0.0, config.noise).map_err(|e| invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(videos);
    let mut items = Vec::new();
    for v in 0..videos {
        let mut frames: Vec<usize> = (0..n).collect();
        frames.shuffle(&mut rng);
        let mut chosen: Vec<usize> = frames[..config.objects_per_video].to_vec();
        chosen.sort_unstable();
        let mut objects: Vec<usize> = (0..OBJECTS.len()).collect();
        objects.shuffle(&mut rng);
        let placements: Vec<(usize, usize, usize)> = chosen
            .iter()
            .zip(&objects)
            .map(|(&f, &o)| (f, o, rng.random_range(0..COLORS.len())))
            .collect();

        let mut data = vec![0.0; n * g * g * d];
        for x in &mut data {
            *x = noise.sample(&mut rng);
        }
        for &(f, o, c) in &placements {
            for p in 0..g * g {
                let row = &mut data[(f * g * g + p) * d..(f * g * g + p + 1) * d];
                row[o] += config.signal;
                row[OBJECTS.len() + c] += config.signal;
            }
        }
        let features = FeatureMaps::new(n, g, d, Tensor::new(vec![n * g * g, d], data)?)?;
        for &(f, o, c) in &placements {
            items.push(ToyItem { video: v, question: question_for(o), answer: COLORS[c].to_string(), keyframe: f });
        }
        out.push(ToyVideo { video_id: format!("toy-{seed}-{v:04}"), features, placements });
    }
    Ok(ToyDataset { config: config.clone(), videos: out, items })
}

/// The MCQ options for an item: all colors in a seeded order.
pub fn options_for(item_index: usize, seed: u64) -> Vec<String> {
    let mut rng = SplitMix64::derive(seed ^ item_index as u64, "toy-options");
    let mut opts: Vec<String> = COLORS.iter().map(|s| s.to_string()).collect();
    opts.shuffle(&mut rng);
    opts
}

/// Small model sized for the toy task.
pub fn toy_model_config(toy: &ToyConfig, seed: u64) -> MmEgoConfig {
    MmEgoConfig {
        lm: LmConfig { layers: 2, heads: 2, model_dim: 32, ffn_dim: 64, max_positions: 512, seed, ..LmConfig::default() },
        enc_dim: toy.enc_dim,
        grid: toy.grid,
        max_frames: toy.frames,
        k: 4,
        alpha: 0.1,
        ..MmEgoConfig::default()
    }
}

/// One single-question training example per item, with the high-res budget
/// cycling through `ks`.
pub fn training_examples(data: &ToyDataset, ks: &[usize]) -> Result<Vec<TrainingExample>> {
    if ks.is_empty() {
        return Err(invalid("at least one k is required"));
    }
    let t = (data.config.grid / 2) * (data.config.grid / 2);
    data.items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let turn = QaTurn { question: it.question.clone(), answer: it.answer.clone(), keyframes: vec![it.keyframe] };
            let layout = build_training_layout(&[turn], data.config.frames, t, ks[i % ks.len()], PrefixMode::Prefix)?;
            Ok(TrainingExample { features: data.videos[it.video].features.clone(), layout })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyRecipe {
    pub train_videos: usize,
    pub ks: [usize; 2],
    pub train: TrainConfig,
}

/// Trains a toy model from scratch; returns it with the final step's losses.
pub fn train_toy(toy: &ToyConfig, recipe: &ToyRecipe, seed: u64) -> Result<(MmEgo, Vec<crate::microlm::StepLosses>)> {
    let data = generate(toy, recipe.train_videos, seed)?;
    let examples = training_examples(&data, &recipe.ks)?;
    let mut model = MmEgo::new(toy_model_config(toy, seed))?;
    let history = crate::pointerkit::train_model(&mut model, &examples, &recipe.train, |_, _| {})?;
    Ok((model, history))
}

pub fn default_recipe(seed: u64) -> ToyRecipe {
    ToyRecipe {
        train_videos: 1600,
        ks: [4, 32],
        train: TrainConfig {
            steps: 300,
            batch_size: 16,
            seed,
            optimizer: OptimizerConfig {
                kind: OptimizerKind::adam(),
                schedule: CosineSchedule { base_lr: 6e-3, min_lr: 0.0, total_steps: 300 },
                clip_norm: None,
            },
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ToyScore {
    /// Fraction of items whose top-scored frame is the keyframe.
    pub pointer_top1: f64,
    /// Fraction of MCQs where the correct color has the highest likelihood.
    pub mcq_accuracy: f64,
}

/// Pointer top-1 and MCQ accuracy on `data` under the given selection options.
pub fn evaluate(model: &MmEgo, data: &ToyDataset, opts: InferOptions, option_seed: u64) -> Result<ToyScore> {
    let embs: Vec<_> = data
        .videos
        .iter()
        .map(|v| model.embed(&v.features, (0..v.features.frames).collect()))
        .collect::<Result<_>>()?;
    let mut top1 = 0usize;
    let mut correct = 0usize;
    for (i, it) in data.items.iter().enumerate() {
        let g = model.glimpse(&embs[it.video], &it.question)?;
        if crate::pointerkit::top_k(&g.s, 1)[0] == it.keyframe {
            top1 += 1;
        }
        let options = options_for(i, option_seed);
        let lp = model.option_logprobs(Some(&embs[it.video]), &it.question, &options, opts)?;
        let best = crate::microlm::argmax(&lp);
        if options[best] == it.answer {
            correct += 1;
        }
    }
    let n = data.items.len().max(1) as f64;
    Ok(ToyScore { pointer_top1: top1 as f64 / n, mcq_accuracy: correct as f64 / n })
}

pub fn pointer_opts(k: usize, alpha: f64) -> InferOptions {
    InferOptions { k, alpha, policy: SelectionPolicy::Pointer }
}

pub fn uniform_opts(k: usize) -> InferOptions {
    InferOptions { k, alpha: 0.0, policy: SelectionPolicy::Uniform }
}

/// Durations cycled over toy videos so every length class is populated.
pub const TOY_DURATIONS_S: [f64; 3] = [90.0, 600.0, 2400.0];

/// The toy items as four-option MCQs, plus the features of every toy video.
pub fn toy_benchmark(data: &ToyDataset, option_seed: u64) -> Result<(Vec<McqItem>, VideoBank)> {
    let mut bank = VideoBank::default();
    for v in &data.videos {
        bank.insert(v.video_id.clone(), v.features.clone());
    }
    let items = data
        .items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let options = options_for(i, option_seed);
            let correct = options.iter().position(|o| *o == it.answer).ok_or_else(|| invalid("answer missing from options"))?;
            let duration_s = TOY_DURATIONS_S[it.video % TOY_DURATIONS_S.len()];
            let (minutes_bucket, class) = bucketize(duration_s)?;
            Ok(McqItem {
                question_id: format!("{}-q{i:05}", data.videos[it.video].video_id),
                video_id: data.videos[it.video].video_id.clone(),
                question: it.question.clone(),
                options: options.try_into().map_err(|_| invalid("toy MCQs need four options"))?,
                correct: Letter::from_index(correct)?,
                minutes_bucket,
                class,
                duration_s,
                keyframe_indices: vec![it.keyframe],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((items, bank))
}
