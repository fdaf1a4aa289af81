use rand::seq::SliceRandom;
use snet_autodiff::{AdaDelta, AdaDeltaConfig, Tape};

use super::decode::{beam_search, DEFAULT_BEAM, DEFAULT_MAX_LEN};
use super::model::{SynthesisInput, SynthesisModel};
use super::postprocess::post_process;
use crate::error::{Error, Result};
use crate::extraction::{Dropout, EpochLog};
use crate::metrics::rouge_l;
use crate::parallel::parallel_map;
use crate::text::{SynthesisPair, BOS, EOS, PAD};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub seed: u64,
    pub optimizer: AdaDeltaConfig,
    /// Dev evaluation every this many epochs; 0 disables.
    pub eval_every: usize,
    pub beam: usize,
    pub max_len: usize,
}

impl Default for SynthesisTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            dropout: 0.0,
            seed: 0,
            optimizer: AdaDeltaConfig::default(),
            eval_every: 1,
            beam: DEFAULT_BEAM,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl SynthesisTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.beam == 0 {
            return Err(Error::Config("beam must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        self.optimizer.validate()?;
        Ok(())
    }
}

/// A generated answer before and after post-processing.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub raw: Vec<String>,
    pub answer: Vec<String>,
    pub log_prob: f64,
}

/// Beam-decodes an answer for `passage` with evidence `start..=end` and
/// post-processes it.
pub fn generate(
    model: &SynthesisModel,
    question: &[String],
    passage: &[String],
    span: (usize, usize),
    beam: usize,
    max_len: usize,
) -> Result<Generated> {
    let input = SynthesisInput::new(&model.vocab, question, passage, span.0, span.1)?;
    let hyp = beam_search(model, &input, beam, max_len)?;
    let ids: Vec<usize> = hyp.body().iter().copied().filter(|&t| t != PAD && t != BOS && t != EOS).collect();
    let raw = model.vocab.decode(&ids);
    let answer = post_process(&raw, &passage[span.0..=span.1], passage);
    Ok(Generated {
        raw,
        answer,
        log_prob: hyp.log_prob,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisMetrics {
    pub rouge_l: f64,
    /// Fraction of post-processed answers equal to the target.
    pub exact_match: f64,
    pub outputs: Vec<Generated>,
}

pub fn evaluate_synthesis(model: &SynthesisModel, pairs: &[SynthesisPair], beam: usize, max_len: usize) -> Result<SynthesisMetrics> {
    let outputs = parallel_map(pairs, |p| generate(model, &p.question, &p.passage, (p.start, p.end), beam, max_len))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut rouge = 0.0;
    let mut exact = 0usize;
    for (p, g) in pairs.iter().zip(&outputs) {
        rouge += rouge_l(&g.answer, std::slice::from_ref(&p.target))?;
        exact += usize::from(g.answer == p.target);
    }
    let n = pairs.len().max(1) as f64;
    Ok(SynthesisMetrics {
        rouge_l: rouge / n,
        exact_match: exact as f64 / n,
        outputs,
    })
}

/// Minibatch AdaDelta on the mean sequence NLL with teacher forcing.
pub fn train_synthesis(
    model: &mut SynthesisModel,
    pairs: &[SynthesisPair],
    dev: &[SynthesisPair],
    cfg: &SynthesisTrainConfig,
    mut log: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Data("synthesis training set is empty".into()));
    }
    let items: Vec<(SynthesisInput, Vec<usize>)> = pairs
        .iter()
        .map(|p| {
            if p.target.is_empty() {
                return Err(Error::Data(format!("query {} has an empty target", p.query_id)));
            }
            Ok((SynthesisInput::from_pair(&model.vocab, p)?, model.target_ids(&p.target)))
        })
        .collect::<Result<_>>()?;
    let mut opt = AdaDelta::new(cfg.optimizer.clone())?;
    let mut shuffle_rng = snet_autodiff::rng::stream(cfg.seed, "shuffle");
    let mut drop_rng = snet_autodiff::rng::stream(cfg.seed, "dropout");
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0f64;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (value, grads) = {
                let mut tape = Tape::with_params(&model.store);
                let mut losses = Vec::with_capacity(batch.len());
                for &i in batch {
                    let (input, target) = &items[i];
                    let dropout = Some(Dropout {
                        rate: cfg.dropout,
                        rng: &mut drop_rng,
                    });
                    losses.push(model.sequence_nll(&mut tape, input, target, dropout)?);
                }
                let sum = tape.add_all(&losses)?;
                let loss = tape.scale(sum, 1.0 / batch.len() as f32);
                let value = tape.value(sum).item() as f64;
                if !value.is_finite() {
                    return Err(crate::extraction::divergence(epoch, b + 1, format!("loss is {value}")));
                }
                (value, tape.backward(loss)?.into_param_grads())
            };
            opt.step(&mut model.store, &grads)
                .map_err(|e| crate::extraction::divergence(epoch, b + 1, e))?;
            total += value;
        }
        let mut entry = EpochLog::new(epoch, total / items.len() as f64);
        if !dev.is_empty() && cfg.eval_every > 0 && epoch % cfg.eval_every == 0 {
            let m = evaluate_synthesis(model, dev, cfg.beam, cfg.max_len)?;
            entry.dev_rouge = Some(m.rouge_l);
            entry.dev_exact = Some(m.exact_match);
        }
        log(&entry);
        history.push(entry);
    }
    Ok(history)
}
