//! Evidence extraction: gated attention matching, a pointer network over the
//! concatenated passages, and passage ranking trained jointly.

mod decode;
mod loss;
mod model;
mod system;
mod train;

pub use decode::{decode_span, ensemble_combine, SpanPrediction};
pub use loss::{extraction_loss, joint_loss, ranking_loss, LOG_FLOOR};
pub use model::{Dropout, ExtractionConfig, ExtractionForward, ExtractionInput, ExtractionModel, ExtractionParams, MatchLayer};
pub use system::{
    evaluate_ensemble, evaluate_extractor, evaluate_predictions, predict_ensemble, redecode, span_mass_ranking, Ensemble,
    Extractor, SpanMetrics,
};
pub use train::{
    selected_passage_items, span_items, span_text, train_extraction, train_items, train_rank_then_extract, EpochLog,
    ExtractionMode, TrainConfig, TrainItem,
};
pub(crate) use train::divergence;
