//! Answer synthesis: a sequence-to-sequence model over the question and the
//! evidence passage, with start/end features marking the extracted span.

mod decode;
mod model;
mod postprocess;
mod train;

pub use decode::{beam_search, greedy, score_sequence, Hypothesis, DEFAULT_BEAM, DEFAULT_MAX_LEN};
pub use model::{synthesis_loss, DecoderStep, Encoded, SynthesisConfig, SynthesisInput, SynthesisModel, SynthesisParams};
pub use postprocess::{collapse_repeats, post_process, repair, MAX_PHRASE};
pub use train::{evaluate_synthesis, generate, train_synthesis, Generated, SynthesisMetrics, SynthesisTrainConfig};
