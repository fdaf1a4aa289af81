use rand::Rng;
use snet_autodiff::{ParamId, ParamStore, Real, Tape, Tensor, Var};

use crate::attention::Attention;
use crate::encoder::{BiGru, EmbeddingTable, GruCell, INIT_SCALE};
use crate::error::{Error, Result};
use crate::extraction::Dropout;
use crate::text::{SynthesisPair, Vocabulary, BOS, EOS};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisConfig {
    pub word_dim: usize,
    pub feature_dim: usize,
    /// Encoder and decoder GRU width d; the readout has 2d units.
    pub hidden: usize,
    pub att_dim: usize,
    /// Start/end evidence features on the passage input. Off gives the plain
    /// question + passage sequence-to-sequence baseline.
    pub position_features: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            word_dim: 32,
            feature_dim: 8,
            hidden: 32,
            att_dim: 32,
            position_features: true,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.word_dim, self.hidden, self.att_dim].contains(&0) || (self.position_features && self.feature_dim == 0) {
            return Err(Error::Config("synthesis dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn readout_dim(&self) -> usize {
        2 * self.hidden
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisParams {
    pub word: EmbeddingTable,
    pub start_feature: Option<ParamId>,
    pub end_feature: Option<ParamId>,
    pub passage_encoder: BiGru,
    pub question_encoder: BiGru,
    pub init_w: ParamId,
    pub init_b: ParamId,
    pub decoder: GruCell,
    /// `w_query` is W_a, `w_key` is U_a.
    pub attention: Attention,
    pub readout_w: ParamId,
    pub readout_u: ParamId,
    pub readout_v: ParamId,
    pub output: ParamId,
}

/// Encoder-side ids for one (question, passage, evidence span) triple.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisInput {
    pub question: Vec<usize>,
    pub passage: Vec<usize>,
    pub start_indicator: Vec<f32>,
    pub end_indicator: Vec<f32>,
}

fn indicator_ids(ind: &[f32], what: &str) -> Result<Vec<usize>> {
    let mut ones = 0;
    let ids = ind
        .iter()
        .map(|&x| {
            if x == 1.0 {
                ones += 1;
                Ok(1)
            } else if x == 0.0 {
                Ok(0)
            } else {
                Err(Error::Data(format!("{what} indicator holds {x}, expected 0 or 1")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if ones != 1 {
        return Err(Error::Data(format!("{what} indicator has {ones} ones, expected exactly one")));
    }
    Ok(ids)
}

impl SynthesisInput {
    /// Inputs with a local inclusive span `start..=end` inside `passage`.
    pub fn new<S: AsRef<str>>(vocab: &Vocabulary, question: &[S], passage: &[S], start: usize, end: usize) -> Result<Self> {
        if start > end || end >= passage.len() {
            return Err(Error::Data(format!("span {start}..={end} outside passage of length {}", passage.len())));
        }
        let n = passage.len();
        Ok(Self {
            question: vocab.encode(question),
            passage: vocab.encode(passage),
            start_indicator: (0..n).map(|i| f32::from(u8::from(i == start))).collect(),
            end_indicator: (0..n).map(|i| f32::from(u8::from(i == end))).collect(),
        })
    }

    pub fn from_pair(vocab: &Vocabulary, pair: &SynthesisPair) -> Result<Self> {
        Self::new(vocab, &pair.question, &pair.passage, pair.start, pair.end)
    }
}

/// Taped encoder outputs shared by every decoder step.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    /// `[n_P + n_Q, 2d]`: passage states followed by question states.
    pub states: Var,
    /// U_a h_j for every state.
    pub states_proj: Var,
    pub init: Var,
    pub passage_len: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderStep {
    pub state: Var,
    pub context: Var,
    /// `[1, |V|]` log-probabilities of the next token.
    pub log_probs: Var,
}

/// Sequence-to-sequence answer generator conditioned on an evidence span.
#[derive(Clone, Debug)]
pub struct SynthesisModel {
    pub config: SynthesisConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub params: SynthesisParams,
}

impl SynthesisModel {
    pub fn new(config: SynthesisConfig, vocab: Vocabulary, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let d = config.hidden;
        let v = vocab.len();
        let word = EmbeddingTable::trainable(&mut store, "word", v, config.word_dim, rng);
        let (start_feature, end_feature) = if config.position_features {
            (
                Some(store.uniform("feature.start", &[2, config.feature_dim], INIT_SCALE, rng)),
                Some(store.uniform("feature.end", &[2, config.feature_dim], INIT_SCALE, rng)),
            )
        } else {
            (None, None)
        };
        let p_in = config.word_dim + if config.position_features { 2 * config.feature_dim } else { 0 };
        let passage_encoder = BiGru::new(&mut store, "passage_encoder", p_in, d, rng);
        let question_encoder = BiGru::new(&mut store, "question_encoder", config.word_dim, d, rng);
        let init_w = store.uniform("init.w_d", &[d, 2 * d], INIT_SCALE, rng);
        let init_b = store.zeros("init.b", &[d]);
        let decoder = GruCell::new(&mut store, "decoder", config.word_dim + 2 * d, d, rng);
        let attention = Attention::new(&mut store, "attention", 2 * d, Some(d), config.att_dim, rng);
        let r = config.readout_dim();
        let readout_w = store.uniform("readout.w_r", &[r, config.word_dim], INIT_SCALE, rng);
        let readout_u = store.uniform("readout.u_r", &[r, 2 * d], INIT_SCALE, rng);
        let readout_v = store.uniform("readout.v_r", &[r, d], INIT_SCALE, rng);
        let output = store.uniform("output.w_o", &[v, d], INIT_SCALE, rng);
        Ok(Self {
            config,
            vocab,
            store,
            params: SynthesisParams {
                word,
                start_feature,
                end_feature,
                passage_encoder,
                question_encoder,
                init_w,
                init_b,
                decoder,
                attention,
                readout_w,
                readout_u,
                readout_v,
                output,
            },
        })
    }

    /// Per-position passage encoder input `[e_t; f^s_t; f^e_t]`.
    pub fn passage_input<T: Real>(&self, tape: &mut Tape<T>, input: &SynthesisInput) -> Result<Var> {
        let n = input.passage.len();
        if n == 0 || input.question.is_empty() {
            return Err(Error::Data("synthesis input needs a nonempty passage and question".into()));
        }
        if input.start_indicator.len() != n || input.end_indicator.len() != n {
            return Err(Error::Data(format!(
                "indicators of length {}/{} do not align with passage of length {n}",
                input.start_indicator.len(),
                input.end_indicator.len()
            )));
        }
        let fs = indicator_ids(&input.start_indicator, "start")?;
        let fe = indicator_ids(&input.end_indicator, "end")?;
        let e = self.params.word.lookup(tape, &input.passage)?;
        match (self.params.start_feature, self.params.end_feature) {
            (Some(s), Some(t)) => {
                let s = tape.param(s);
                let t = tape.param(t);
                let fs = tape.gather_rows(s, &fs, None)?;
                let fe = tape.gather_rows(t, &fe, None)?;
                Ok(tape.concat(&[e, fs, fe], 1)?)
            }
            _ => Ok(e),
        }
    }

    pub fn encode_with_features<T: Real, R: Rng>(
        &self,
        tape: &mut Tape<T>,
        input: &SynthesisInput,
        dropout: &mut Option<Dropout<'_, R>>,
    ) -> Result<Encoded> {
        let xp = self.passage_input(tape, input)?;
        let xp = apply_dropout(tape, xp, dropout)?;
        let xq = self.params.word.lookup(tape, &input.question)?;
        let xq = apply_dropout(tape, xq, dropout)?;
        let hp = self.params.passage_encoder.encode(tape, xp)?;
        let hq = self.params.question_encoder.encode(tape, xq)?;
        let joined = tape.concat(&[hp.bwd_final, hq.bwd_final], 1)?;
        let w = tape.param(self.params.init_w);
        let b = tape.param(self.params.init_b);
        let pre = tape.linear(joined, w)?;
        let pre = tape.add_row(pre, b)?;
        let init = tape.tanh(pre);
        let states = tape.concat(&[hp.states, hq.states], 0)?;
        let states_proj = self.params.attention.project_keys(tape, states)?;
        Ok(Encoded {
            states,
            states_proj,
            init,
            passage_len: hp.len,
        })
    }

    /// c_0: the context fed to the first decoder step.
    pub fn initial_context<T: Real>(&self, tape: &mut Tape<T>) -> Var {
        tape.constant(Tensor::zeros(&[1, 2 * self.config.hidden]))
    }

    /// One decoder step: d_t from (w_{t−1}, c_{t−1}, d_{t−1}), c_t by attention
    /// with d_{t−1}, then the maxout readout.
    pub fn decoder_step<T: Real>(
        &self,
        tape: &mut Tape<T>,
        enc: &Encoded,
        state: Var,
        prev_word: usize,
        prev_context: Var,
    ) -> Result<DecoderStep> {
        let emb = self.params.word.lookup(tape, &[prev_word])?;
        let x = tape.concat(&[emb, prev_context], 1)?;
        let d = self.params.decoder.step(tape, state, x)?;
        let context = self
            .params
            .attention
            .attend(tape, enc.states, enc.states_proj, Some(state))?
            .vector;
        let wr = tape.param(self.params.readout_w);
        let ur = tape.param(self.params.readout_u);
        let vr = tape.param(self.params.readout_v);
        let a = tape.linear(emb, wr)?;
        let b = tape.linear(context, ur)?;
        let c = tape.linear(d, vr)?;
        let r = tape.add_all(&[a, b, c])?;
        let m = tape.maxout_pairs(r)?;
        let wo = tape.param(self.params.output);
        let logits = tape.linear(m, wo)?;
        Ok(DecoderStep {
            state: d,
            context,
            log_probs: tape.log_softmax(logits),
        })
    }

    /// Target ids followed by EOS.
    pub fn target_ids<S: AsRef<str>>(&self, target: &[S]) -> Vec<usize> {
        let mut ids = self.vocab.encode(target);
        ids.push(EOS);
        ids
    }

    /// −log p(Y|X) under teacher forcing, summed over the target positions.
    pub fn sequence_nll<T: Real, R: Rng>(
        &self,
        tape: &mut Tape<T>,
        input: &SynthesisInput,
        target: &[usize],
        mut dropout: Option<Dropout<'_, R>>,
    ) -> Result<Var> {
        if target.is_empty() {
            return Err(Error::Data("synthesis target is empty".into()));
        }
        let enc = self.encode_with_features(tape, input, &mut dropout)?;
        let mut state = enc.init;
        let mut context = self.initial_context(tape);
        let mut prev = BOS;
        let mut picks = Vec::with_capacity(target.len());
        for &y in target {
            let step = self.decoder_step(tape, &enc, state, prev, context)?;
            picks.push(tape.pick(step.log_probs, y)?);
            state = step.state;
            context = step.context;
            prev = y;
        }
        let total = tape.add_all(&picks)?;
        Ok(tape.scale(total, T::lit(-1.0)))
    }

    pub fn schema(&self) -> Vec<(String, Vec<usize>)> {
        self.store.iter().map(|(_, n, t)| (n.to_string(), t.shape().to_vec())).collect()
    }
}

/// Negative log-likelihood of one pair's target (EOS included).
pub fn synthesis_loss<T: Real>(model: &SynthesisModel, tape: &mut Tape<T>, pair: &SynthesisPair) -> Result<Var> {
    if pair.target.is_empty() {
        return Err(Error::Data(format!("query {} has an empty target", pair.query_id)));
    }
    let input = SynthesisInput::from_pair(&model.vocab, pair)?;
    let target = model.target_ids(&pair.target);
    model.sequence_nll::<T, snet_autodiff::rng::Rng>(tape, &input, &target, None)
}

fn apply_dropout<T: Real, R: Rng>(tape: &mut Tape<T>, x: Var, dropout: &mut Option<Dropout<'_, R>>) -> Result<Var> {
    match dropout {
        Some(d) if d.rate > 0.0 => Ok(tape.dropout(x, d.rate, true, d.rng)?),
        _ => Ok(x),
    }
}
