use super::dataset::RcExample;
use super::spans::{concat_passages, select_gold_span, GoldSpan, OffsetTable, SpanSearch};
use crate::error::Result;
use crate::metrics::rouge_l;

pub const EXTRACTION_THRESHOLD: f64 = 0.7;
pub const SYNTHESIS_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractionPair {
    /// Index of the example in the slice the set was built from.
    pub example: usize,
    /// Offsets into the concatenated passage sequence.
    pub gold: GoldSpan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairSource {
    GoldSpan,
    ModelExtracted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisPair {
    pub query_id: u64,
    pub question: Vec<String>,
    pub passage_index: usize,
    pub passage: Vec<String>,
    /// Local span offsets inside `passage`, start ≤ end.
    pub start: usize,
    pub end: usize,
    pub target: Vec<String>,
    pub source: PairSource,
}

impl SynthesisPair {
    pub fn start_indicator(&self) -> Vec<f32> {
        (0..self.passage.len()).map(|i| f32::from(u8::from(i == self.start))).collect()
    }

    pub fn end_indicator(&self) -> Vec<f32> {
        (0..self.passage.len()).map(|i| f32::from(u8::from(i == self.end))).collect()
    }

    pub fn span_tokens(&self) -> &[String] {
        &self.passage[self.start..=self.end]
    }
}

/// Anything that predicts an evidence span over the concatenated passages.
pub trait SpanExtractor {
    fn extract(&self, example: &RcExample) -> Result<(usize, usize)>;
}

pub fn build_extraction_training_set(examples: &[RcExample], threshold: f64, search: &SpanSearch) -> Result<Vec<ExtractionPair>> {
    let mut out = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        if ex.answer_tokens.is_empty() {
            continue;
        }
        let (tokens, _) = concat_passages(ex);
        let gold = select_gold_span(&tokens, &ex.answer_tokens, search)?;
        if gold.rouge > threshold {
            out.push(ExtractionPair { example: i, gold });
        }
    }
    Ok(out)
}

/// Projects a global span into the passage holding its start, clamping the end
/// to that passage.
pub fn project_span(table: &OffsetTable, start: usize, end: usize) -> (usize, usize, usize) {
    let (p, local_start) = table.to_local(start);
    let last = table.passage_len(p) - 1;
    let local_end = if end >= table.passage_range(p).end {
        last
    } else {
        table.to_local(end).1
    };
    (p, local_start, local_end.max(local_start))
}

fn make_pair(ex: &RcExample, table: &OffsetTable, start: usize, end: usize, source: PairSource) -> Result<SynthesisPair> {
    let (p, s, e) = project_span(table, start, end);
    let passage = ex.passages[p].clone();
    // the reference closest to the evidence becomes the target
    let span = &passage[s..=e];
    let mut target = &ex.answer_tokens[0];
    let mut best = -1.0;
    for r in &ex.answer_tokens {
        let score = rouge_l(span, std::slice::from_ref(r))?;
        if score > best {
            best = score;
            target = r;
        }
    }
    Ok(SynthesisPair {
        query_id: ex.query_id,
        question: ex.question.clone(),
        passage_index: p,
        passage,
        start: s,
        end: e,
        target: target.clone(),
        source,
    })
}

/// Gold-span pairs above `threshold`, plus one model-extracted pair per
/// answered example when an extractor is supplied.
pub fn build_synthesis_training_set(
    examples: &[RcExample],
    extractor: Option<&dyn SpanExtractor>,
    threshold: f64,
    search: &SpanSearch,
) -> Result<Vec<SynthesisPair>> {
    let mut out = Vec::new();
    for ex in examples {
        if ex.answer_tokens.iter().all(Vec::is_empty) {
            continue;
        }
        let (tokens, table) = concat_passages(ex);
        let gold = select_gold_span(&tokens, &ex.answer_tokens, search)?;
        if gold.rouge > threshold {
            out.push(make_pair(ex, &table, gold.start, gold.end, PairSource::GoldSpan)?);
        }
        if let Some(model) = extractor {
            let (s, e) = model.extract(ex)?;
            out.push(make_pair(ex, &table, s, e, PairSource::ModelExtracted)?);
        }
    }
    Ok(out)
}
