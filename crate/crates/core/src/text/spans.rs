use std::collections::HashSet;

use super::dataset::RcExample;
use crate::error::{Error, Result};
use crate::metrics::rouge_from_lcs;

/// Maps positions of the concatenated passage sequence to (passage, local).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetTable {
    starts: Vec<usize>,
    total: usize,
}

impl OffsetTable {
    pub fn from_lengths(lengths: &[usize]) -> Self {
        let mut starts = Vec::with_capacity(lengths.len());
        let mut total = 0;
        for &l in lengths {
            starts.push(total);
            total += l;
        }
        Self { starts, total }
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn num_passages(&self) -> usize {
        self.starts.len()
    }

    pub fn passage_len(&self, p: usize) -> usize {
        self.passage_range(p).len()
    }

    pub fn passage_range(&self, p: usize) -> std::ops::Range<usize> {
        let end = self.starts.get(p + 1).copied().unwrap_or(self.total);
        self.starts[p]..end
    }

    pub fn to_local(&self, global: usize) -> (usize, usize) {
        assert!(global < self.total, "position {global} outside sequence of {}", self.total);
        // last passage starting at or before `global`; empty passages never match
        let p = self.starts.partition_point(|&s| s <= global) - 1;
        (p, global - self.starts[p])
    }

    pub fn to_global(&self, passage: usize, local: usize) -> usize {
        assert!(local < self.passage_len(passage));
        self.starts[passage] + local
    }
}

pub fn concat_passages(example: &RcExample) -> (Vec<String>, OffsetTable) {
    let lengths: Vec<usize> = example.passages.iter().map(Vec::len).collect();
    let tokens = example.passages.iter().flatten().cloned().collect();
    (tokens, OffsetTable::from_lengths(&lengths))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoldSpan {
    pub start: usize,
    pub end: usize,
    pub rouge: f64,
}

impl GoldSpan {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }
}

/// Span search settings. The default search is exact; `max_span_len` adds a
/// hard cap on candidate length for very long inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SpanSearch {
    pub max_span_len: Option<usize>,
}

impl SpanSearch {
    pub fn exact() -> Self {
        Self { max_span_len: None }
    }

    /// Caps spans at max(2 × longest reference, 10) tokens.
    pub fn capped(refs: &[Vec<String>]) -> Self {
        let longest = refs.iter().map(Vec::len).max().unwrap_or(0);
        Self {
            max_span_len: Some((2 * longest).max(10)),
        }
    }
}

fn better(score: f64, len: usize, best: &GoldSpan) -> bool {
    score > best.rouge || (score == best.rouge && len < best.len())
}

/// Highest-ROUGE-L span of `tokens` against the best of `refs`.
///
/// Ties go to the shorter span, then to the earlier start. Extension from a
/// start stops once no longer span can reach the current best, which keeps
/// the search exact.
pub fn select_gold_span<S: AsRef<str>>(tokens: &[S], refs: &[Vec<S>], search: &SpanSearch) -> Result<GoldSpan> {
    if refs.is_empty() {
        return Err(Error::Data("gold span search needs at least one reference".into()));
    }
    if tokens.is_empty() {
        return Err(Error::Data("gold span search over an empty sequence".into()));
    }
    let refs: Vec<Vec<&str>> = refs
        .iter()
        .map(|r| r.iter().map(AsRef::as_ref).collect())
        .collect();
    let tokens: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let vocab: HashSet<&str> = refs.iter().flatten().copied().collect();
    let n = tokens.len();
    let cap = search.max_span_len.unwrap_or(n).max(1);

    let mut best = GoldSpan {
        start: 0,
        end: 0,
        rouge: -1.0,
    };
    let mut rows: Vec<Vec<usize>> = refs.iter().map(|r| vec![0; r.len() + 1]).collect();
    for i in 0..n {
        // a span opening on an unmatched token loses to the same span without it
        if best.rouge > 0.0 && !vocab.contains(tokens[i]) {
            continue;
        }
        for row in &mut rows {
            row.fill(0);
        }
        for j in i..n.min(i + cap) {
            let len = j - i + 1;
            let mut score = 0.0f64;
            let mut bound = 0.0f64;
            for (r, row) in refs.iter().zip(rows.iter_mut()) {
                let mut diag = 0;
                for (k, y) in r.iter().enumerate() {
                    let up = row[k + 1];
                    row[k + 1] = if tokens[j] == *y { diag + 1 } else { up.max(row[k]) };
                    diag = up;
                }
                let l = row[r.len()];
                score = score.max(rouge_from_lcs(l, len, r.len()));
                // best any extension could do: add only matching tokens until
                // the reference is exhausted
                let d = (r.len() - l).max(1);
                bound = bound.max(rouge_from_lcs((l + d).min(r.len()), len + d, r.len()));
            }
            if better(score, len, &best) {
                best = GoldSpan {
                    start: i,
                    end: j,
                    rouge: score,
                };
            }
            if bound < best.rouge {
                break;
            }
        }
    }
    Ok(best)
}

/// Span search over all passages of `example` against its tokenized answers.
pub fn gold_span_for(example: &RcExample, search: &SpanSearch) -> Result<GoldSpan> {
    let (tokens, _) = concat_passages(example);
    select_gold_span(&tokens, &example.answer_tokens, search)
}
