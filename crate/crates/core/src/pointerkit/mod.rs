//! Memory pointer prompting: a compressed glimpse pass scores every frame against a
//! learnable pointer embedding, explore-exploit mixing picks the top-k frames, and a
//! fallback pass answers from their high-resolution embeddings.

mod layout;
mod model;
mod report;
mod scores;
mod train;

pub use layout::{
    assemble_fallback, assemble_glimpse, build_training_layout, fallback_plan, glimpse_plan, ground_truth_selection,
    GlimpseSequence, PrefixMode, QaTurn, Role, Segment, SegmentContent, SequencePlan, TrainingLayout,
};
pub use model::{
    pointer_loss, position_roles, training_loss, Glimpse, InferOptions, InferenceOutput, MmEgo, MmEgoConfig,
    SelectionPolicy, TrainingExample, MODEL_FILE, POINTER,
};
pub use report::{scores_svg, write_scores_csv};
pub use scores::{
    anchor_set, anchor_vector, correlation_scores, mix_and_select, score_and_select, softmax, top_k,
    uniform_selection, CorrelationScores, KeyFrameSelection, SelectionSource,
};
pub use train::{conversation_examples, train_model, TrainConfig};
