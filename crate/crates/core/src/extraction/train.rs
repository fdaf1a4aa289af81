use rand::seq::SliceRandom;
use snet_autodiff::{AdaDelta, AdaDeltaConfig, Tape};

use super::loss::{check_weight, extraction_loss, joint_loss, ranking_loss};
use super::model::{Dropout, ExtractionInput, ExtractionModel};
use super::system::{evaluate_extractor, Extractor, SpanMetrics};
use crate::error::{Error, Result};
use crate::text::{concat_passages, select_gold_span, ExtractionPair, RcExample, SpanSearch};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtractionMode {
    Joint,
    NoRanking,
    RankThenExtract,
}

impl std::str::FromStr for ExtractionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::Joint),
            "no-ranking" => Ok(Self::NoRanking),
            "rank-then-extract" => Ok(Self::RankThenExtract),
            other => Err(Error::Config(format!("unknown extraction mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub seed: u64,
    pub optimizer: AdaDeltaConfig,
    /// Weight of the span loss against the ranking loss.
    pub r: f64,
    pub categorical_ce: bool,
    /// Evaluate on the dev set every this many epochs; 0 disables.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            dropout: 0.0,
            seed: 0,
            optimizer: AdaDeltaConfig::default(),
            r: 0.8,
            categorical_ce: false,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_weight(self.r)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.optimizer.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub dev_rouge: Option<f64>,
    pub dev_p_at_1: Option<f64>,
    /// Fraction of dev questions whose decoded span is the oracle span.
    pub dev_exact: Option<f64>,
}

impl EpochLog {
    pub fn new(epoch: usize, loss: f64) -> Self {
        Self {
            epoch,
            loss,
            dev_rouge: None,
            dev_p_at_1: None,
            dev_exact: None,
        }
    }

    pub fn record(&mut self, m: &SpanMetrics) {
        self.dev_rouge = Some(m.rouge_l);
        self.dev_p_at_1 = m.p_at_1;
        self.dev_exact = Some(m.exact_match);
    }
}

/// One prepared training instance.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub input: ExtractionInput,
    pub gold: Option<(usize, usize)>,
    pub correct: Option<usize>,
}

pub fn span_items(model: &ExtractionModel, examples: &[RcExample], pairs: &[ExtractionPair]) -> Result<Vec<TrainItem>> {
    pairs
        .iter()
        .map(|p| {
            let ex = &examples[p.example];
            Ok(TrainItem {
                input: model.input(ex)?,
                gold: Some((p.gold.start, p.gold.end)),
                correct: ex.selected_passage,
            })
        })
        .collect()
}

pub(crate) fn divergence(epoch: usize, batch: usize, e: impl std::fmt::Display) -> Error {
    Error::Divergence {
        epoch,
        batch,
        detail: e.to_string(),
    }
}

/// Minibatch AdaDelta on r·L_AP + (1 − r)·L_PR. Items lacking a gold span or
/// a correct passage contribute only the term they can.
pub fn train_items(
    model: &mut ExtractionModel,
    items: &[TrainItem],
    cfg: &TrainConfig,
    mut evaluate: impl FnMut(&ExtractionModel) -> Result<Option<SpanMetrics>>,
    mut log: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::Data("extraction training set is empty".into()));
    }
    let mut opt = AdaDelta::new(cfg.optimizer.clone())?;
    let mut shuffle_rng = snet_autodiff::rng::stream(cfg.seed, "shuffle");
    let mut drop_rng = snet_autodiff::rng::stream(cfg.seed, "dropout");
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let use_rank = cfg.r < 1.0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0f64;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (value, grads) = {
                let mut tape = Tape::with_params(&model.store);
                let mut losses = Vec::with_capacity(batch.len());
                for &i in batch {
                    let item = &items[i];
                    let dropout = Some(Dropout {
                        rate: cfg.dropout,
                        rng: &mut drop_rng,
                    });
                    let need_rank = use_rank && item.correct.is_some();
                    let out = model.forward(&mut tape, &item.input, need_rank, dropout)?;
                    let span = match item.gold {
                        Some(g) if cfg.r > 0.0 => Some(extraction_loss(&mut tape, out.start, out.end, g, cfg.categorical_ce)?),
                        _ => None,
                    };
                    let rank = match (out.rank_probs, item.correct) {
                        (Some(p), Some(c)) => Some(ranking_loss(&mut tape, p, c)?),
                        _ => None,
                    };
                    let l = match (span, rank) {
                        (Some(s), Some(r)) => joint_loss(&mut tape, s, r, cfg.r)?,
                        (Some(s), None) => tape.scale(s, cfg.r as f32),
                        (None, Some(r)) => tape.scale(r, (1.0 - cfg.r) as f32),
                        (None, None) => continue,
                    };
                    losses.push(l);
                }
                if losses.is_empty() {
                    continue;
                }
                let sum = tape.add_all(&losses)?;
                let loss = tape.scale(sum, 1.0 / batch.len() as f32);
                let value = tape.value(sum).item() as f64;
                if !value.is_finite() {
                    return Err(divergence(epoch, b + 1, format!("loss is {value}")));
                }
                (value, tape.backward(loss)?.into_param_grads())
            };
            opt.step(&mut model.store, &grads).map_err(|e| divergence(epoch, b + 1, e))?;
            total += value;
        }
        let mut entry = EpochLog::new(epoch, total / items.len() as f64);
        if cfg.eval_every > 0 && epoch % cfg.eval_every == 0 {
            if let Some(m) = evaluate(model)? {
                entry.record(&m);
            }
        }
        log(&entry);
        history.push(entry);
    }
    Ok(history)
}

fn dev_metrics(dev: &[RcExample]) -> impl FnMut(&ExtractionModel) -> Result<Option<SpanMetrics>> + '_ {
    move |m: &ExtractionModel| {
        if dev.is_empty() {
            return Ok(None);
        }
        evaluate_extractor(&Extractor::Single(m.clone()), dev).map(Some)
    }
}

/// Trains a single model on gold-span pairs. `NoRanking` forces r = 1 and
/// scores passages by span mass afterwards.
pub fn train_extraction(
    model: &mut ExtractionModel,
    examples: &[RcExample],
    pairs: &[ExtractionPair],
    dev: &[RcExample],
    cfg: &TrainConfig,
    mode: ExtractionMode,
    log: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    if pairs.is_empty() {
        return Err(Error::Data("extraction training set is empty after the gold-span ROUGE-L filter".into()));
    }
    let mut cfg = cfg.clone();
    match mode {
        ExtractionMode::Joint => model.config.ranking = true,
        ExtractionMode::NoRanking => {
            cfg.r = 1.0;
            model.config.ranking = false;
        }
        ExtractionMode::RankThenExtract => {
            return Err(Error::Usage("rank-then-extract trains two models; use train_rank_then_extract".into()))
        }
    }
    let items = span_items(model, examples, pairs)?;
    train_items(model, &items, &cfg, dev_metrics(dev), log)
}

/// Gold spans searched inside the selected passage alone.
pub fn selected_passage_items(model: &ExtractionModel, examples: &[RcExample], threshold: f64, search: &SpanSearch) -> Result<Vec<TrainItem>> {
    let mut out = Vec::new();
    for ex in examples {
        let Some(p) = ex.selected_passage else { continue };
        if ex.answer_tokens.is_empty() {
            continue;
        }
        let gold = select_gold_span(&ex.passages[p], &ex.answer_tokens, search)?;
        if gold.rouge > threshold {
            out.push(TrainItem {
                input: ExtractionInput::with_passages(&model.vocab, ex, &[p])?,
                gold: Some((gold.start, gold.end)),
                correct: None,
            });
        }
    }
    Ok(out)
}

/// Trains a ranker (r = 0) on every example with a selected passage and a
/// separate extractor (r = 1) on the selected passages alone.
pub fn train_rank_then_extract(
    ranker: &mut ExtractionModel,
    extractor: &mut ExtractionModel,
    examples: &[RcExample],
    dev: &[RcExample],
    cfg: &TrainConfig,
    threshold: f64,
    search: &SpanSearch,
    mut log: impl FnMut(&str, &EpochLog),
) -> Result<Vec<EpochLog>> {
    ranker.config.ranking = true;
    extractor.config.ranking = false;
    let rank_items: Vec<TrainItem> = examples
        .iter()
        .filter(|ex| ex.selected_passage.is_some())
        .map(|ex| {
            Ok(TrainItem {
                input: ranker.input(ex)?,
                gold: None,
                correct: ex.selected_passage,
            })
        })
        .collect::<Result<_>>()?;
    let rank_cfg = TrainConfig {
        r: 0.0,
        eval_every: 0,
        ..cfg.clone()
    };
    train_items(ranker, &rank_items, &rank_cfg, |_| Ok(None), |e| log("ranker", e))?;

    let span_items = selected_passage_items(extractor, examples, threshold, search)?;
    if span_items.is_empty() {
        return Err(Error::Data(format!(
            "no selected passage has gold-span ROUGE-L above {threshold}"
        )));
    }
    let span_cfg = TrainConfig {
        r: 1.0,
        eval_every: 0,
        ..cfg.clone()
    };
    let mut history = train_items(extractor, &span_items, &span_cfg, |_| Ok(None), |e| log("extractor", e))?;
    if !dev.is_empty() {
        let system = Extractor::RankThenExtract {
            ranker: ranker.clone(),
            extractor: extractor.clone(),
        };
        let s = evaluate_extractor(&system, dev)?;
        if let Some(last) = history.last_mut() {
            last.record(&s);
        }
    }
    Ok(history)
}

/// Full-sequence tokens and offsets for an example, for span reporting.
pub fn span_text(example: &RcExample, span: (usize, usize)) -> Vec<String> {
    let (tokens, _) = concat_passages(example);
    tokens[span.0..=span.1].to_vec()
}
