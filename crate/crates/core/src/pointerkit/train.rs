//! Seeded mini-batch training over prepared examples.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::model::{training_loss, MmEgo, TrainingExample};
use crate::error::{invalid, Result};
use crate::microlm::{train_step, Optimizer, OptimizerConfig, StepLosses};
use numkit::SplitMix64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

/// Runs `config.steps` updates, drawing each batch without replacement from
/// `examples`; `on_step` sees every step's losses.
pub fn train_model<F>(model: &mut MmEgo, examples: &[TrainingExample], config: &TrainConfig, mut on_step: F) -> Result<Vec<StepLosses>>
where
    F: FnMut(usize, &StepLosses),
{
    if examples.is_empty() || config.batch_size == 0 {
        return Err(invalid("training needs examples and a positive batch size"));
    }
    let mut rng = SplitMix64::derive(config.seed, "batches");
    let mut opt = Optimizer::new(config.optimizer);
    let cfg = model.config.clone();
    let loss = move |tape: &mut numkit::Tape<'_>, b: &numkit::Bound, ex: &&TrainingExample| training_loss(tape, b, &cfg, ex);
    let mut history = Vec::with_capacity(config.steps);
    let bs = config.batch_size.min(examples.len());
    for step in 0..config.steps {
        let batch: Vec<&TrainingExample> = sample(&mut rng, examples.len(), bs).into_iter().map(|i| &examples[i]).collect();
        let l = train_step(model.params_mut(), &mut opt, &batch, &loss)?;
        on_step(step, &l);
        history.push(l);
    }
    Ok(history)
}

/// Packs a conversation's QA pairs, `turns_per_example` at a time, into
/// prefixed training examples over `features`.
pub fn conversation_examples(
    conversation: &crate::dataforge::Conversation,
    features: &crate::embedkit::FeatureMaps,
    k: usize,
    turns_per_example: usize,
) -> Result<Vec<TrainingExample>> {
    if turns_per_example == 0 {
        return Err(invalid("turns_per_example must be positive"));
    }
    let t = crate::embedkit::tokens_per_frame(features.grid)?;
    let turns: Vec<super::QaTurn> = conversation
        .qa
        .iter()
        .map(|q| {
            if let Some(&bad) = q.keyframe_indices.iter().find(|&&i| i >= features.frames) {
                return Err(invalid(format!(
                    "{}: keyframe {bad} outside {} sampled frames",
                    conversation.video_id, features.frames
                )));
            }
            Ok(super::QaTurn { question: q.question.clone(), answer: q.answer.clone(), keyframes: q.keyframe_indices.clone() })
        })
        .collect::<Result<_>>()?;
    turns
        .chunks(turns_per_example)
        .map(|chunk| {
            let layout = super::build_training_layout(chunk, features.frames, t, k, super::PrefixMode::Prefix)?;
            Ok(TrainingExample { features: features.clone(), layout })
        })
        .collect()
}
