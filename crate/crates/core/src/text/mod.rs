//! Tokenization, vocabularies, dataset ingestion and training-pair construction.

mod dataset;
mod pairs;
mod spans;
mod synthetic;
mod tokenize;
mod vocab;

pub use dataset::{load_dataset, parse_dataset, write_dataset, RcExample};
pub use pairs::{
    build_extraction_training_set, build_synthesis_training_set, ExtractionPair, PairSource, SpanExtractor,
    SynthesisPair, EXTRACTION_THRESHOLD, SYNTHESIS_THRESHOLD,
};
pub use pairs::project_span;
pub use spans::{concat_passages, gold_span_for, select_gold_span, GoldSpan, OffsetTable, SpanSearch};
pub use synthetic::{generate_synthetic_corpus, AnswerStyle, CorpusSpec, NO_CUES, YES_CUES};
pub use tokenize::{tokenize, tokenize_with_offsets};
pub use vocab::{Vocabulary, BOS, EOS, PAD, UNK};
