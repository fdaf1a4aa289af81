use std::collections::HashMap;

use rand::Rng;
use snet_autodiff::{ParamId, ParamStore, Real, Tape, Tensor, Var};

use crate::attention::Attention;
use crate::encoder::{BiGru, CharEncoder, EmbeddingTable, GruCell, INIT_SCALE};
use crate::error::{Error, Result};
use crate::text::{RcExample, Vocabulary};

use super::decode::{decode_span, SpanPrediction};

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractionConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub hidden: usize,
    pub att_dim: usize,
    pub use_chars: bool,
    pub bidirectional_match: bool,
    /// Scale of the frozen random word vectors used when no pretrained file
    /// is given.
    pub embed_scale: f64,
    pub max_span_len: Option<usize>,
    /// Whether the ranking head is trained and used for passage scores. When
    /// off, passages are scored by the span probability mass they hold.
    pub ranking: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            word_dim: 32,
            char_dim: 16,
            char_hidden: 16,
            hidden: 32,
            att_dim: 32,
            use_chars: true,
            bidirectional_match: false,
            embed_scale: 0.5,
            max_span_len: None,
            ranking: true,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.word_dim, self.hidden, self.att_dim];
        if dims.contains(&0) || (self.use_chars && (self.char_dim == 0 || self.char_hidden == 0)) {
            return Err(Error::Config("extraction dimensions must be positive".into()));
        }
        if self.max_span_len == Some(0) {
            return Err(Error::Config("max_span_len must be positive".into()));
        }
        Ok(())
    }

    /// Width of the matching states v^P.
    pub fn match_dim(&self) -> usize {
        if self.bidirectional_match {
            2 * self.hidden
        } else {
            self.hidden
        }
    }
}

/// Gated attention matching for one direction: attention, gate W_g and GRU.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchLayer {
    pub attention: Attention,
    pub gate: ParamId,
    pub gru: GruCell,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractionParams {
    pub word: EmbeddingTable,
    pub chars: Option<CharEncoder>,
    pub question_encoder: BiGru,
    pub passage_encoder: BiGru,
    pub matcher: MatchLayer,
    pub matcher_backward: Option<MatchLayer>,
    pub pointer: Attention,
    pub answer_gru: GruCell,
    pub question_pool: Attention,
    pub question_query: ParamId,
    pub rank_pool: Attention,
    pub rank_w: ParamId,
    pub rank_v: ParamId,
}

/// Token ids and strings for one question with its passages.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtractionInput {
    pub question: Vec<usize>,
    pub question_tokens: Vec<String>,
    pub passages: Vec<Vec<usize>>,
    pub passage_tokens: Vec<Vec<String>>,
}

impl ExtractionInput {
    pub fn new(vocab: &Vocabulary, example: &RcExample) -> Result<Self> {
        let all: Vec<usize> = (0..example.passages.len()).collect();
        Self::with_passages(vocab, example, &all)
    }

    pub fn with_passages(vocab: &Vocabulary, example: &RcExample, keep: &[usize]) -> Result<Self> {
        if example.question.is_empty() {
            return Err(Error::Data(format!("query {} has an empty question", example.query_id)));
        }
        if keep.is_empty() {
            return Err(Error::Data(format!("query {} has no passages", example.query_id)));
        }
        let passage_tokens: Vec<Vec<String>> = keep.iter().map(|&p| example.passages[p].clone()).collect();
        Ok(Self {
            question: vocab.encode(&example.question),
            question_tokens: example.question.clone(),
            passages: passage_tokens.iter().map(|p| vocab.encode(p)).collect(),
            passage_tokens,
        })
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.passages.iter().map(Vec::len).collect()
    }

    pub fn total_len(&self) -> usize {
        self.passages.iter().map(Vec::len).sum()
    }
}

/// Dropout settings for a training forward pass.
pub struct Dropout<'r, R: Rng> {
    pub rate: f64,
    pub rng: &'r mut R,
}

/// Taped outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct ExtractionForward {
    /// `[1, N]` start distribution over the concatenated passages.
    pub start: Var,
    /// `[1, N]` end distribution.
    pub end: Var,
    /// `[1, k]` raw ranking scores g and their softmax ĝ; absent when the
    /// ranking head was skipped.
    pub rank_scores: Option<Var>,
    pub rank_probs: Option<Var>,
    pub lengths: Vec<usize>,
}

/// The multi-task evidence extractor: shared encoders and matching, a
/// two-step pointer head, and a passage ranking head.
#[derive(Clone, Debug)]
pub struct ExtractionModel {
    pub config: ExtractionConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub params: ExtractionParams,
}

fn match_layer(store: &mut ParamStore, prefix: &str, cfg: &ExtractionConfig, rng: &mut impl Rng) -> MatchLayer {
    let u = 2 * cfg.hidden;
    MatchLayer {
        attention: Attention::new(store, &format!("{prefix}.att"), u, Some(u + cfg.hidden), cfg.att_dim, rng),
        gate: store.uniform(format!("{prefix}.w_g"), &[2 * u, 2 * u], INIT_SCALE, rng),
        gru: GruCell::new(store, &format!("{prefix}.gru"), 2 * u, cfg.hidden, rng),
    }
}

impl ExtractionModel {
    /// Fresh model with frozen random word vectors (or `word_vectors`, rows
    /// aligned with `vocab`).
    pub fn new(config: ExtractionConfig, vocab: Vocabulary, word_vectors: Option<Tensor>, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let word = match word_vectors {
            Some(t) => {
                if t.shape() != [vocab.len(), config.word_dim] {
                    return Err(Error::Config(format!(
                        "word vectors {:?} do not match vocabulary {} × {}",
                        t.shape(),
                        vocab.len(),
                        config.word_dim
                    )));
                }
                EmbeddingTable::frozen(&mut store, "word", t)?
            }
            None => EmbeddingTable::frozen_random(&mut store, "word", vocab.len(), config.word_dim, config.embed_scale, rng)?,
        };
        let chars = config
            .use_chars
            .then(|| CharEncoder::new(&mut store, "char", config.char_dim, config.char_hidden, rng));
        let input = config.word_dim + chars.as_ref().map_or(0, CharEncoder::output_dim);
        let h = config.hidden;
        let u = 2 * h;
        let v = config.match_dim();
        let question_encoder = BiGru::new(&mut store, "question_encoder", input, h, rng);
        let passage_encoder = BiGru::new(&mut store, "passage_encoder", input, h, rng);
        let matcher = match_layer(&mut store, "match", &config, rng);
        let matcher_backward = config
            .bidirectional_match
            .then(|| match_layer(&mut store, "match_bwd", &config, rng));
        let pointer = Attention::new(&mut store, "pointer", v, Some(u), config.att_dim, rng);
        let answer_gru = GruCell::new(&mut store, "answer_gru", v, u, rng);
        let question_pool = Attention::new(&mut store, "question_pool", u, Some(u), config.att_dim, rng);
        let question_query = store.uniform("question_pool.v_r", &[1, u], INIT_SCALE, rng);
        let rank_pool = Attention::new(&mut store, "rank_pool", v, Some(u), config.att_dim, rng);
        let rank_w = store.uniform("rank.w_g", &[config.att_dim, u + v], INIT_SCALE, rng);
        let rank_v = store.uniform("rank.v_g", &[1, config.att_dim], INIT_SCALE, rng);
        Ok(Self {
            config,
            vocab,
            store,
            params: ExtractionParams {
                word,
                chars,
                question_encoder,
                passage_encoder,
                matcher,
                matcher_backward,
                pointer,
                answer_gru,
                question_pool,
                question_query,
                rank_pool,
                rank_w,
                rank_v,
            },
        })
    }

    pub fn input(&self, example: &RcExample) -> Result<ExtractionInput> {
        ExtractionInput::new(&self.vocab, example)
    }

    /// Per-position word (and character) embeddings of one sequence.
    fn embed<T: Real, R: Rng>(
        &self,
        tape: &mut Tape<T>,
        ids: &[usize],
        tokens: &[String],
        chars: Option<(Var, &HashMap<&str, usize>)>,
        dropout: &mut Option<Dropout<'_, R>>,
    ) -> Result<Var> {
        let mut x = self.params.word.lookup(tape, ids)?;
        if let Some((table, index)) = chars {
            let rows: Vec<usize> = tokens.iter().map(|t| index[t.as_str()]).collect();
            let c = tape.gather_rows(table, &rows, None)?;
            x = tape.concat(&[x, c], 1)?;
        }
        apply_dropout(tape, x, dropout)
    }

    fn match_direction<T: Real>(
        &self,
        layer: &MatchLayer,
        tape: &mut Tape<T>,
        uq: Var,
        uq_proj: Var,
        up: Var,
        reverse: bool,
    ) -> Result<Vec<Var>> {
        let n = tape.shape(up)[0];
        let gate = tape.param(layer.gate);
        let mut v = layer.gru.zero_state(tape, 1);
        let mut out = vec![v; n];
        for k in 0..n {
            let t = if reverse { n - 1 - k } else { k };
            let ut = tape.row(up, t)?;
            let query = tape.concat(&[ut, v], 1)?;
            let c = layer.attention.attend(tape, uq, uq_proj, Some(query))?.vector;
            let joined = tape.concat(&[ut, c], 1)?;
            let g = tape.linear(joined, gate)?;
            let g = tape.sigmoid(g);
            let gated = tape.mul(g, joined)?;
            v = layer.gru.step(tape, v, gated)?;
            out[t] = v;
        }
        Ok(out)
    }

    /// Question-aware passage states v^P for one passage.
    pub fn gated_match<T: Real>(&self, tape: &mut Tape<T>, uq: Var, up: Var) -> Result<Var> {
        let uq_proj = self.params.matcher.attention.project_keys(tape, uq)?;
        let fwd = self.match_direction(&self.params.matcher, tape, uq, uq_proj, up, false)?;
        let fwd = tape.concat(&fwd, 0)?;
        match &self.params.matcher_backward {
            None => Ok(fwd),
            Some(layer) => {
                let proj = layer.attention.project_keys(tape, uq)?;
                let bwd = self.match_direction(layer, tape, uq, proj, up, true)?;
                let bwd = tape.concat(&bwd, 0)?;
                Ok(tape.concat(&[fwd, bwd], 1)?)
            }
        }
    }

    /// r^Q: attention pooling of the question against the learned query v_r^Q.
    pub fn question_vector<T: Real>(&self, tape: &mut Tape<T>, uq: Var) -> Result<Var> {
        let q = tape.param(self.params.question_query);
        Ok(self.params.question_pool.pool(tape, uq, Some(q))?.vector)
    }

    /// Two pointer steps over `v: [N, match_dim]` starting from `rq`.
    pub fn pointer<T: Real>(&self, tape: &mut Tape<T>, v: Var, rq: Var) -> Result<(Var, Var)> {
        let proj = self.params.pointer.project_keys(tape, v)?;
        let first = self.params.pointer.attend(tape, v, proj, Some(rq))?;
        let h1 = self.params.answer_gru.step(tape, rq, first.vector)?;
        let second = self.params.pointer.attend(tape, v, proj, Some(h1))?;
        Ok((first.weights, second.weights))
    }

    /// Ranking scores `[1, k]` from the per-passage matching states.
    pub fn passage_rank<T: Real>(&self, tape: &mut Tape<T>, per_passage: &[Var], rq: Var) -> Result<(Var, Var)> {
        let w = tape.param(self.params.rank_w);
        let vg = tape.param(self.params.rank_v);
        let mut scores = Vec::with_capacity(per_passage.len());
        for &vp in per_passage {
            let rp = self.params.rank_pool.pool(tape, vp, Some(rq))?.vector;
            let joined = tape.concat(&[rq, rp], 1)?;
            let hidden = tape.linear(joined, w)?;
            let hidden = tape.tanh(hidden);
            scores.push(tape.linear(hidden, vg)?);
        }
        let g = tape.concat(&scores, 1)?;
        let probs = tape.softmax(g, None)?;
        Ok((g, probs))
    }

    pub fn forward<T: Real, R: Rng>(
        &self,
        tape: &mut Tape<T>,
        input: &ExtractionInput,
        with_ranking: bool,
        mut dropout: Option<Dropout<'_, R>>,
    ) -> Result<ExtractionForward> {
        if input.passages.iter().any(Vec::is_empty) || input.passages.is_empty() {
            return Err(Error::Data("every passage must be nonempty".into()));
        }
        // character vectors for every distinct token, computed once
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut distinct: Vec<&str> = Vec::new();
        for t in input.question_tokens.iter().chain(input.passage_tokens.iter().flatten()) {
            index.entry(t.as_str()).or_insert_with(|| {
                distinct.push(t.as_str());
                distinct.len() - 1
            });
        }
        let char_table = match &self.params.chars {
            Some(enc) => Some(enc.embed_words(tape, &distinct)?),
            None => None,
        };
        let chars = char_table.map(|t| (t, &index));

        let xq = self.embed(tape, &input.question, &input.question_tokens, chars, &mut dropout)?;
        let uq = self.params.question_encoder.encode(tape, xq)?.states;
        let mut per_passage = Vec::with_capacity(input.passages.len());
        for (ids, toks) in input.passages.iter().zip(&input.passage_tokens) {
            let xp = self.embed(tape, ids, toks, chars, &mut dropout)?;
            let up = self.params.passage_encoder.encode(tape, xp)?.states;
            let up = apply_dropout(tape, up, &mut dropout)?;
            per_passage.push(self.gated_match(tape, uq, up)?);
        }
        let v = tape.concat(&per_passage, 0)?;
        let rq = self.question_vector(tape, uq)?;
        let (start, end) = self.pointer(tape, v, rq)?;
        let (rank_scores, rank_probs) = if with_ranking {
            let (g, p) = self.passage_rank(tape, &per_passage, rq)?;
            (Some(g), Some(p))
        } else {
            (None, None)
        };
        Ok(ExtractionForward {
            start,
            end,
            rank_scores,
            rank_probs,
            lengths: input.lengths(),
        })
    }

    /// Inference on one example.
    pub fn predict_input(&self, input: &ExtractionInput) -> Result<SpanPrediction> {
        let mut tape = Tape::with_params(&self.store);
        let out = self.forward::<f32, snet_autodiff::rng::Rng>(&mut tape, input, self.config.ranking, None)?;
        let start = tape.value(out.start).data().to_vec();
        let end = tape.value(out.end).data().to_vec();
        let span = decode_span(&start, &end, self.config.max_span_len);
        let mut pred = SpanPrediction {
            start_probs: start,
            end_probs: end,
            span,
            passage_scores: Vec::new(),
            passage_lengths: out.lengths,
        };
        pred.passage_scores = match out.rank_probs {
            Some(p) => tape.value(p).data().to_vec(),
            None => pred.span_mass(),
        };
        Ok(pred)
    }

    pub fn predict(&self, example: &RcExample) -> Result<SpanPrediction> {
        self.predict_input(&self.input(example)?)
    }

    /// Parameter groups ordered by registration; the checkpoint schema.
    pub fn schema(&self) -> Vec<(String, Vec<usize>)> {
        self.store.iter().map(|(_, n, t)| (n.to_string(), t.shape().to_vec())).collect()
    }
}

fn apply_dropout<T: Real, R: Rng>(tape: &mut Tape<T>, x: Var, dropout: &mut Option<Dropout<'_, R>>) -> Result<Var> {
    match dropout {
        Some(d) if d.rate > 0.0 => Ok(tape.dropout(x, d.rate, true, d.rng)?),
        _ => Ok(x),
    }
}
