//! Evaluation: model adapters, accuracy by length class, language-bias sets,
//! mean debiased accuracy, frame-budget ablations and alpha sweeps.

mod adapter;
mod metrics;
mod report;

pub use adapter::{
    extract_letter, mcq_prompt, AnswerMode, ConstantAdapter, MmEgoAdapter, ModelAdapter, SeededRandomAdapter, VideoBank,
    VideoInput,
};
pub use metrics::{
    accuracy, drop, extract_bias_set, mda, mda_of_rows, rel_diff, round2, run_predictions, AccuracyRow, BiasSet,
    EvalReport, ModelReport, Prediction, RunOutput,
};
pub use report::{alpha_sweep, debiased_mda, write_mda_csv, write_sweep_csv, FrameAblation, SweepRow};
