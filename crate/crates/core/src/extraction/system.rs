use super::decode::{decode_span, ensemble_combine, SpanPrediction};
use super::model::{ExtractionInput, ExtractionModel};
use crate::error::{Error, Result};
use crate::metrics::{precision_at_1, rouge_l};
use crate::parallel::parallel_map;
use crate::text::{concat_passages, gold_span_for, OffsetTable, RcExample, SpanExtractor, SpanSearch, Vocabulary};

/// A trained extraction setup: one joint model, or a ranker feeding a
/// single-passage extractor.
#[derive(Clone, Debug)]
pub enum Extractor {
    Single(ExtractionModel),
    RankThenExtract {
        ranker: ExtractionModel,
        extractor: ExtractionModel,
    },
}

impl Extractor {
    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Self::Single(m) => &m.vocab,
            Self::RankThenExtract { extractor, .. } => &extractor.vocab,
        }
    }

    pub fn max_span_len(&self) -> Option<usize> {
        match self {
            Self::Single(m) => m.config.max_span_len,
            Self::RankThenExtract { extractor, .. } => extractor.config.max_span_len,
        }
    }

    pub fn predict(&self, example: &RcExample) -> Result<SpanPrediction> {
        match self {
            Self::Single(m) => m.predict(example),
            Self::RankThenExtract { ranker, extractor } => {
                let ranked = ranker.predict(example)?;
                let mut best = 0;
                for (i, &s) in ranked.passage_scores.iter().enumerate() {
                    if s > ranked.passage_scores[best] {
                        best = i;
                    }
                }
                let input = ExtractionInput::with_passages(&extractor.vocab, example, &[best])?;
                let local = extractor.predict_input(&input)?;
                // lay the single-passage distributions over the full sequence
                let table = OffsetTable::from_lengths(&ranked.passage_lengths);
                let range = table.passage_range(best);
                let mut start = vec![0.0; table.total_len()];
                let mut end = vec![0.0; table.total_len()];
                start[range.clone()].copy_from_slice(&local.start_probs);
                end[range.clone()].copy_from_slice(&local.end_probs);
                Ok(SpanPrediction {
                    start_probs: start,
                    end_probs: end,
                    span: (range.start + local.span.0, range.start + local.span.1),
                    passage_scores: ranked.passage_scores,
                    passage_lengths: ranked.passage_lengths,
                })
            }
        }
    }
}

impl SpanExtractor for Extractor {
    fn extract(&self, example: &RcExample) -> Result<(usize, usize)> {
        Ok(self.predict(example)?.span)
    }
}

impl SpanExtractor for ExtractionModel {
    fn extract(&self, example: &RcExample) -> Result<(usize, usize)> {
        Ok(self.predict(example)?.span)
    }
}

/// Ensemble prediction: members are combined in list order.
pub fn predict_ensemble(members: &[Extractor], example: &RcExample) -> Result<SpanPrediction> {
    match members {
        [] => Err(Error::Usage("no extraction model given".into())),
        [one] => one.predict(example),
        many => {
            let preds = many.iter().map(|m| m.predict(example)).collect::<Result<Vec<_>>>()?;
            ensemble_combine(&preds, many[0].max_span_len())
        }
    }
}

/// Several extractors voting as one.
pub struct Ensemble<'a>(pub &'a [Extractor]);

impl SpanExtractor for Ensemble<'_> {
    fn extract(&self, example: &RcExample) -> Result<(usize, usize)> {
        Ok(predict_ensemble(self.0, example)?.span)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpanMetrics {
    /// Mean ROUGE-L of the decoded spans against the answers.
    pub rouge_l: f64,
    /// Fraction of answered questions whose decoded span equals the oracle span.
    pub exact_match: f64,
    pub p_at_1: Option<f64>,
    pub predictions: Vec<SpanPrediction>,
}

pub fn evaluate_predictions(examples: &[RcExample], preds: Vec<SpanPrediction>) -> Result<SpanMetrics> {
    let mut rouge = 0.0;
    let mut exact = 0usize;
    let mut answered = 0usize;
    let mut rankings = Vec::new();
    for (ex, p) in examples.iter().zip(&preds) {
        if let Some(sel) = ex.selected_passage {
            rankings.push((p.passage_scores.clone(), sel));
        }
        if ex.answer_tokens.is_empty() {
            continue;
        }
        answered += 1;
        let (tokens, _) = concat_passages(ex);
        rouge += rouge_l(&tokens[p.span.0..=p.span.1], &ex.answer_tokens)?;
        let gold = gold_span_for(ex, &SpanSearch::exact())?;
        if (gold.start, gold.end) == p.span {
            exact += 1;
        }
    }
    let denom = answered.max(1) as f64;
    Ok(SpanMetrics {
        rouge_l: rouge / denom,
        exact_match: exact as f64 / denom,
        p_at_1: (!rankings.is_empty()).then(|| precision_at_1(&rankings)),
        predictions: preds,
    })
}

pub fn evaluate_extractor(system: &Extractor, examples: &[RcExample]) -> Result<SpanMetrics> {
    let preds = parallel_map(examples, |ex| system.predict(ex)).into_iter().collect::<Result<Vec<_>>>()?;
    evaluate_predictions(examples, preds)
}

pub fn evaluate_ensemble(members: &[Extractor], examples: &[RcExample]) -> Result<SpanMetrics> {
    let preds = parallel_map(examples, |ex| predict_ensemble(members, ex))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    evaluate_predictions(examples, preds)
}

/// Incidental ranking of a span-only model: the passage holding most span mass.
pub fn span_mass_ranking(pred: &SpanPrediction) -> usize {
    let mass = pred.span_mass();
    let mut best = 0;
    for (i, &m) in mass.iter().enumerate() {
        if m > mass[best] {
            best = i;
        }
    }
    best
}

/// Re-decodes a prediction with a different length cap.
pub fn redecode(pred: &SpanPrediction, max_len: Option<usize>) -> (usize, usize) {
    decode_span(&pred.start_probs, &pred.end_probs, max_len)
}
