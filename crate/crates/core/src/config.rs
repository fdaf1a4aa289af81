//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use snet_autodiff::AdaDeltaConfig;

use crate::error::{Error, Result};
use crate::extraction::{ExtractionConfig, ExtractionMode, TrainConfig};
use crate::synthesis::{SynthesisConfig, SynthesisTrainConfig, DEFAULT_BEAM, DEFAULT_MAX_LEN};
use crate::text::{AnswerStyle, CorpusSpec, EXTRACTION_THRESHOLD, SYNTHESIS_THRESHOLD};

pub const ABLATIONS: [&str; 4] = ["no-ranking", "rank-then-extract", "no-position-features", "categorical-ce"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub extraction_mode: ExtractionMode,
    pub dev_data: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,

    pub word_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub hidden: usize,
    pub att_dim: usize,
    pub use_chars: bool,
    pub bidirectional_match: bool,
    pub embed_scale: f64,
    pub max_span_len: Option<usize>,
    pub vocab_size: usize,
    pub extraction_threshold: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub r: f64,
    pub categorical_ce: bool,

    pub synth_word_dim: usize,
    pub feature_dim: usize,
    pub synth_hidden: usize,
    pub synth_att_dim: usize,
    pub position_features: bool,
    pub synth_vocab_size: usize,
    pub synthesis_threshold: f64,
    pub synth_epochs: usize,
    pub synth_batch_size: usize,
    pub synth_dropout: f64,
    pub beam: usize,
    pub max_len: usize,

    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub clip_norm: Option<f64>,
    pub eval_every: usize,

    pub corpus_examples: usize,
    pub corpus_vocab: usize,
    pub corpus_passage_len: usize,
    pub corpus_passages: usize,
    pub corpus_style: AnswerStyle,
    pub corpus_max_answer: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            extraction_mode: ExtractionMode::Joint,
            dev_data: None,
            word_vectors: None,
            word_dim: 300,
            char_dim: 20,
            char_hidden: 50,
            hidden: 150,
            att_dim: 150,
            use_chars: true,
            bidirectional_match: false,
            embed_scale: 0.5,
            max_span_len: None,
            vocab_size: 100_000,
            extraction_threshold: EXTRACTION_THRESHOLD,
            epochs: 10,
            batch_size: 32,
            dropout: 0.1,
            r: 0.8,
            categorical_ce: false,
            synth_word_dim: 300,
            feature_dim: 50,
            synth_hidden: 150,
            synth_att_dim: 150,
            position_features: true,
            synth_vocab_size: 30_000,
            synthesis_threshold: SYNTHESIS_THRESHOLD,
            synth_epochs: 10,
            synth_batch_size: 32,
            synth_dropout: 0.0,
            beam: DEFAULT_BEAM,
            max_len: DEFAULT_MAX_LEN,
            learning_rate: 1.0,
            rho: 0.95,
            epsilon: 1e-6,
            clip_norm: None,
            eval_every: 1,
            corpus_examples: 100,
            corpus_vocab: 50,
            corpus_passage_len: 10,
            corpus_passages: 2,
            corpus_style: AnswerStyle::ExactSpan,
            corpus_max_answer: 3,
        }
    }
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("`{key}` has invalid value `{raw}`")))
}

fn optional<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Option<T>> {
    match raw {
        "none" | "" => Ok(None),
        _ => value(key, raw).map(Some),
    }
}

impl RunConfig {
    /// Parses a file of `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        match key {
            "seed" => self.seed = value(key, raw)?,
            "extraction_mode" => self.extraction_mode = raw.parse()?,
            "dev_data" => self.dev_data = optional(key, raw)?,
            "word_vectors" => self.word_vectors = optional(key, raw)?,
            "word_dim" => self.word_dim = value(key, raw)?,
            "char_dim" => self.char_dim = value(key, raw)?,
            "char_hidden" => self.char_hidden = value(key, raw)?,
            "hidden" => self.hidden = value(key, raw)?,
            "att_dim" => self.att_dim = value(key, raw)?,
            "use_chars" => self.use_chars = value(key, raw)?,
            "bidirectional_match" => self.bidirectional_match = value(key, raw)?,
            "embed_scale" => self.embed_scale = value(key, raw)?,
            "max_span_len" => self.max_span_len = optional(key, raw)?,
            "vocab_size" => self.vocab_size = value(key, raw)?,
            "extraction_threshold" => self.extraction_threshold = value(key, raw)?,
            "epochs" => self.epochs = value(key, raw)?,
            "batch_size" => self.batch_size = value(key, raw)?,
            "dropout" => self.dropout = value(key, raw)?,
            "r" => self.r = value(key, raw)?,
            "categorical_ce" => self.categorical_ce = value(key, raw)?,
            "synth_word_dim" => self.synth_word_dim = value(key, raw)?,
            "feature_dim" => self.feature_dim = value(key, raw)?,
            "synth_hidden" => self.synth_hidden = value(key, raw)?,
            "synth_att_dim" => self.synth_att_dim = value(key, raw)?,
            "position_features" => self.position_features = value(key, raw)?,
            "synth_vocab_size" => self.synth_vocab_size = value(key, raw)?,
            "synthesis_threshold" => self.synthesis_threshold = value(key, raw)?,
            "synth_epochs" => self.synth_epochs = value(key, raw)?,
            "synth_batch_size" => self.synth_batch_size = value(key, raw)?,
            "synth_dropout" => self.synth_dropout = value(key, raw)?,
            "beam" => self.beam = value(key, raw)?,
            "max_len" => self.max_len = value(key, raw)?,
            "learning_rate" => self.learning_rate = value(key, raw)?,
            "rho" => self.rho = value(key, raw)?,
            "epsilon" => self.epsilon = value(key, raw)?,
            "clip_norm" => self.clip_norm = optional(key, raw)?,
            "eval_every" => self.eval_every = value(key, raw)?,
            "corpus_examples" => self.corpus_examples = value(key, raw)?,
            "corpus_vocab" => self.corpus_vocab = value(key, raw)?,
            "corpus_passage_len" => self.corpus_passage_len = value(key, raw)?,
            "corpus_passages" => self.corpus_passages = value(key, raw)?,
            "corpus_style" => self.corpus_style = raw.parse()?,
            "corpus_max_answer" => self.corpus_max_answer = value(key, raw)?,
            "ablation" => {
                for name in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    self.apply_ablation(name)?;
                }
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn apply_ablation(&mut self, name: &str) -> Result<()> {
        match name {
            "no-ranking" => self.extraction_mode = ExtractionMode::NoRanking,
            "rank-then-extract" => self.extraction_mode = ExtractionMode::RankThenExtract,
            "no-position-features" => self.position_features = false,
            "categorical-ce" => self.categorical_ce = true,
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation `{other}` (expected one of {})",
                    ABLATIONS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::Config(format!("r = {} outside [0, 1]", self.r)));
        }
        for (k, d) in [("dropout", self.dropout), ("synth_dropout", self.synth_dropout)] {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::Config(format!("{k} = {d} outside [0, 1)")));
            }
        }
        if self.beam < 1 {
            return Err(Error::Config("beam must be at least 1".into()));
        }
        if self.max_len < 1 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        for (k, t) in [
            ("extraction_threshold", self.extraction_threshold),
            ("synthesis_threshold", self.synthesis_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("{k} = {t} outside [0, 1]")));
            }
        }
        if self.batch_size == 0 || self.synth_batch_size == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        self.extraction_model().validate()?;
        self.synthesis_model().validate()?;
        self.optimizer().validate()?;
        Ok(())
    }

    pub fn extraction_model(&self) -> ExtractionConfig {
        ExtractionConfig {
            word_dim: self.word_dim,
            char_dim: self.char_dim,
            char_hidden: self.char_hidden,
            hidden: self.hidden,
            att_dim: self.att_dim,
            use_chars: self.use_chars,
            bidirectional_match: self.bidirectional_match,
            embed_scale: self.embed_scale,
            max_span_len: self.max_span_len,
            ranking: self.extraction_mode != ExtractionMode::NoRanking,
        }
    }

    pub fn synthesis_model(&self) -> SynthesisConfig {
        SynthesisConfig {
            word_dim: self.synth_word_dim,
            feature_dim: self.feature_dim,
            hidden: self.synth_hidden,
            att_dim: self.synth_att_dim,
            position_features: self.position_features,
        }
    }

    pub fn optimizer(&self) -> AdaDeltaConfig {
        AdaDeltaConfig {
            learning_rate: self.learning_rate,
            rho: self.rho,
            epsilon: self.epsilon,
            clip_norm: self.clip_norm,
        }
    }

    pub fn extraction_training(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            dropout: self.dropout,
            seed: self.seed,
            optimizer: self.optimizer(),
            r: self.r,
            categorical_ce: self.categorical_ce,
            eval_every: self.eval_every,
        }
    }

    pub fn synthesis_training(&self) -> SynthesisTrainConfig {
        SynthesisTrainConfig {
            epochs: self.synth_epochs,
            batch_size: self.synth_batch_size,
            dropout: self.synth_dropout,
            seed: self.seed,
            optimizer: self.optimizer(),
            eval_every: self.eval_every,
            beam: self.beam,
            max_len: self.max_len,
        }
    }

    pub fn corpus(&self) -> CorpusSpec {
        let mut spec = CorpusSpec::new(
            self.corpus_examples,
            self.corpus_vocab,
            self.corpus_passage_len,
            self.corpus_passages,
            self.corpus_style,
        );
        spec.max_answer_len = self.corpus_max_answer;
        spec
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
