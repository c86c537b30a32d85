//! Losses, the fine-tuning loop and the two-phase training pipeline.

mod finetune;
mod losses;
mod objective;
mod pipeline;

pub use finetune::{fine_tune, BatchLoss, FineTuneOutcome, TrainConfig};
pub use losses::{classification_loss, nll_from_scores, pair_score, triplet_loss, ClassifierHead, SCORE_CLAMP};
pub use objective::{
    batched_triples, embedding_loss, objective_gradient, objective_loss, EmbeddingLoss, IndexedTriples, LossParts,
    ObjectiveGradient, ObjectiveSettings,
};
pub use pipeline::{
    prepare_triples, train_pipeline, PipelineConfig, PipelineReport, PreparedTriples, PromptMethod, RunMetadata,
    TrainedModel, RUN_FORMAT, RUN_FORMAT_VERSION,
};
