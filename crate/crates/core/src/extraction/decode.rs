use crate::error::{Error, Result};
use crate::text::OffsetTable;

/// Decoded pointer output for one question.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanPrediction {
    pub start_probs: Vec<f32>,
    pub end_probs: Vec<f32>,
    /// Inclusive (start, end) over the concatenated passages.
    pub span: (usize, usize),
    /// ĝ over the candidate passages.
    pub passage_scores: Vec<f32>,
    pub passage_lengths: Vec<usize>,
}

impl SpanPrediction {
    /// Start plus end probability mass falling in each passage.
    pub fn span_mass(&self) -> Vec<f32> {
        let table = OffsetTable::from_lengths(&self.passage_lengths);
        (0..table.num_passages())
            .map(|p| {
                table
                    .passage_range(p)
                    .map(|i| self.start_probs[i] + self.end_probs[i])
                    .sum::<f32>()
                    / 2.0
            })
            .collect()
    }

    /// Passage holding the decoded span start.
    pub fn span_passage(&self) -> usize {
        OffsetTable::from_lengths(&self.passage_lengths).to_local(self.span.0).0
    }
}

/// The pair i ≤ j maximising `start[i]·end[j]`, optionally with `j - i < max_len`.
/// Ties go to the smaller start, then the smaller end.
pub fn decode_span(start: &[f32], end: &[f32], max_len: Option<usize>) -> (usize, usize) {
    let n = start.len().min(end.len());
    let cap = max_len.unwrap_or(n).max(1);
    let mut best = (0, 0);
    let mut best_score = f32::NEG_INFINITY;
    for i in 0..n {
        for j in i..n.min(i + cap) {
            let s = start[i] * end[j];
            if s > best_score {
                best_score = s;
                best = (i, j);
            }
        }
    }
    best
}

fn renormalize(v: &mut [f32]) {
    let total: f32 = v.iter().sum();
    if total > 0.0 {
        for x in v {
            *x /= total;
        }
    }
}

/// Position-wise sum of the members' distributions, renormalized and decoded
/// again; passage scores are averaged.
pub fn ensemble_combine(preds: &[SpanPrediction], max_len: Option<usize>) -> Result<SpanPrediction> {
    let first = preds
        .first()
        .ok_or_else(|| Error::Usage("ensemble of zero models".into()))?;
    let n = first.start_probs.len();
    let k = first.passage_scores.len();
    let mut start = vec![0.0f32; n];
    let mut end = vec![0.0f32; n];
    let mut scores = vec![0.0f32; k];
    for p in preds {
        if p.start_probs.len() != n || p.passage_scores.len() != k {
            return Err(Error::Usage(format!(
                "ensemble members disagree on length: {} vs {}",
                p.start_probs.len(),
                n
            )));
        }
        for i in 0..n {
            start[i] += p.start_probs[i];
            end[i] += p.end_probs[i];
        }
        for (s, x) in scores.iter_mut().zip(&p.passage_scores) {
            *s += x;
        }
    }
    renormalize(&mut start);
    renormalize(&mut end);
    for s in &mut scores {
        *s /= preds.len() as f32;
    }
    Ok(SpanPrediction {
        span: decode_span(&start, &end, max_len),
        start_probs: start,
        end_probs: end,
        passage_scores: scores,
        passage_lengths: first.passage_lengths.clone(),
    })
}
