//! A small causal transformer LM with a byte tokenizer, greedy generation,
//! training loop and checkpoints.

mod config;
mod model;
mod tokenizer;
mod train;

pub use config::LmConfig;
pub use model::{
    append_rows, argmax, embed_tokens, forward, init_lm, log_softmax_at, logits, LmOutput, MicroLm, CONFIG_FILE,
    HEAD, POS, TOK,
};
pub use tokenizer::{Tokenizer, BOS, EOS, IMG, PAD, PTR, VOCAB_SIZE};
pub use train::{
    batch_gradients, grad_check_loss, train_step, CosineSchedule, LossVars, Optimizer, OptimizerConfig, OptimizerKind, StepLosses,
};
