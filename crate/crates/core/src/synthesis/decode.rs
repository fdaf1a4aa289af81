use snet_autodiff::{Real, Tape, Var};

use super::model::{Encoded, SynthesisInput, SynthesisModel};
use crate::error::{Error, Result};
use crate::text::{BOS, EOS};

pub const DEFAULT_BEAM: usize = 12;
pub const DEFAULT_MAX_LEN: usize = 40;

/// A partial output sequence still being extended.
#[derive(Clone, Copy, Debug)]
struct Live {
    /// Index into the token arena for the last token, or `None` for the root.
    last: Option<usize>,
    log_prob: f64,
    state: Var,
    context: Var,
}

/// Decoder output for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted ids; ends with EOS when `completed`.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub completed: bool,
}

impl Hypothesis {
    /// Tokens without the closing EOS.
    pub fn body(&self) -> &[usize] {
        match self.tokens.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

fn check_max_len(max_len: usize) -> Result<()> {
    if max_len < 1 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    Ok(())
}

fn encode<'a>(model: &'a SynthesisModel, input: &SynthesisInput) -> Result<(Tape<'a, f32>, Encoded)> {
    let mut tape = Tape::with_params(&model.store);
    let enc = model.encode_with_features::<f32, snet_autodiff::rng::Rng>(&mut tape, input, &mut None)?;
    Ok((tape, enc))
}

/// Argmax decoding; ties go to the lowest id.
pub fn greedy(model: &SynthesisModel, input: &SynthesisInput, max_len: usize) -> Result<Hypothesis> {
    check_max_len(max_len)?;
    let (mut tape, enc) = encode(model, input)?;
    let mut state = enc.init;
    let mut context = model.initial_context(&mut tape);
    let mut prev = BOS;
    let mut out = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        completed: false,
    };
    for _ in 0..max_len {
        let step = model.decoder_step(&mut tape, &enc, state, prev, context)?;
        let lp = tape.value(step.log_probs).data();
        let mut best = 0;
        for (i, &x) in lp.iter().enumerate() {
            if x > lp[best] {
                best = i;
            }
        }
        out.log_prob += lp[best].as_f64();
        out.tokens.push(best);
        if best == EOS {
            out.completed = true;
            break;
        }
        state = step.state;
        context = step.context;
        prev = best;
    }
    Ok(out)
}

/// Beam search without length normalisation. Each step keeps the best
/// `beam_size` expansions of all live hypotheses; expansions ending in EOS
/// retire. Decoding stops when no live hypothesis can beat the best retired
/// one, or at `max_len`, where the survivors compete with the retired pool.
pub fn beam_search(model: &SynthesisModel, input: &SynthesisInput, beam_size: usize, max_len: usize) -> Result<Hypothesis> {
    if beam_size < 1 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    check_max_len(max_len)?;
    let (mut tape, enc) = encode(model, input)?;
    // token arena: (id, parent)
    let mut arena: Vec<(usize, Option<usize>)> = Vec::new();
    let root_context = model.initial_context(&mut tape);
    let mut live = vec![Live {
        last: None,
        log_prob: 0.0,
        state: enc.init,
        context: root_context,
    }];
    // (log_prob, step, node)
    let mut done: Vec<(f64, usize, usize)> = Vec::new();

    for step_no in 0..max_len {
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        let mut steps = Vec::with_capacity(live.len());
        for (h, hyp) in live.iter().enumerate() {
            let prev = hyp.last.map_or(BOS, |n| arena[n].0);
            let step = model.decoder_step(&mut tape, &enc, hyp.state, prev, hyp.context)?;
            let lp = tape.value(step.log_probs).data();
            candidates.extend(lp.iter().enumerate().map(|(tok, &x)| (hyp.log_prob + x.as_f64(), h, tok)));
            steps.push(step);
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        candidates.truncate(beam_size);
        let mut next = Vec::with_capacity(candidates.len());
        for (lp, h, tok) in candidates {
            arena.push((tok, live[h].last));
            let node = arena.len() - 1;
            if tok == EOS {
                done.push((lp, step_no, node));
            } else {
                next.push(Live {
                    last: Some(node),
                    log_prob: lp,
                    state: steps[h].state,
                    context: steps[h].context,
                });
            }
        }
        live = next;
        let best_done = done.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
        let best_live = live.iter().map(|l| l.log_prob).fold(f64::NEG_INFINITY, f64::max);
        if live.is_empty() || best_done >= best_live {
            break;
        }
    }

    let tokens_of = |mut node: Option<usize>| {
        let mut out = Vec::new();
        while let Some(n) = node {
            out.push(arena[n].0);
            node = arena[n].1;
        }
        out.reverse();
        out
    };
    // hypotheses still live at the cap rank after every completion at equal score
    let mut finished: Vec<(f64, usize, Vec<usize>, bool)> = done
        .iter()
        .map(|&(lp, s, n)| (lp, s, tokens_of(Some(n)), true))
        .chain(live.iter().map(|l| (l.log_prob, max_len, tokens_of(l.last), false)))
        .collect();
    finished.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2)));
    let (log_prob, _, tokens, completed) = finished.swap_remove(0);
    Ok(Hypothesis {
        tokens,
        log_prob,
        completed,
    })
}

/// Cumulative log-probability the model assigns to `tokens` (EOS included
/// when present).
pub fn score_sequence(model: &SynthesisModel, input: &SynthesisInput, tokens: &[usize]) -> Result<f64> {
    let mut tape = Tape::with_params(&model.store);
    let nll = model.sequence_nll::<f32, snet_autodiff::rng::Rng>(&mut tape, input, tokens, None)?;
    Ok(-tape.value(nll).item().as_f64())
}
