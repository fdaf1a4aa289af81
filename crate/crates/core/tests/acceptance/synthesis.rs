use snet_autodiff::rng::stream;
use snet_core::metrics::{EvalReport, Scored};
use snet_core::pipeline::synthesis_vocab;
use snet_core::synthesis::{evaluate_synthesis, train_synthesis, SynthesisConfig, SynthesisModel, SynthesisTrainConfig};
use snet_core::text::{
    build_synthesis_training_set, generate_synthetic_corpus, gold_span_for, AnswerStyle, CorpusSpec,
    PairSource, RcExample, SpanSearch, SynthesisPair,
};

use crate::Verdict;

const COPY_TARGET: f64 = 0.9;
const YES_NO_TARGET: f64 = 0.9;
const BUCKET_GAP: f64 = 0.5;
const MAX_EPOCHS: usize = 500;
const EVAL_EVERY: usize = 10;
const BEAM: usize = 12;
const MAX_LEN: usize = 10;

fn config() -> SynthesisConfig {
    SynthesisConfig {
        word_dim: 16,
        feature_dim: 4,
        hidden: 16,
        att_dim: 16,
        position_features: true,
    }
}

/// Trains on `pairs` and returns the first evaluated epoch whose metric
/// reaches `target`, with the trained model.
fn train_until(corpus: &[RcExample], pairs: &[SynthesisPair], target: f64, seed: u64) -> (Option<usize>, SynthesisModel) {
    let vocab = synthesis_vocab(corpus, 1000).unwrap();
    let mut model = SynthesisModel::new(config(), vocab, &mut stream(seed, "init")).unwrap();
    let cfg = SynthesisTrainConfig {
        epochs: MAX_EPOCHS,
        batch_size: 5,
        seed,
        eval_every: EVAL_EVERY,
        beam: BEAM,
        max_len: MAX_LEN,
        ..SynthesisTrainConfig::default()
    };
    let mut reached = None;
    train_synthesis(&mut model, pairs, pairs, &cfg, |e| {
        if reached.is_none() && e.dev_exact >= Some(target) {
            reached = Some(e.epoch);
        }
    })
    .unwrap();
    (reached, model)
}

/// Pairs whose evidence is the planted "topic is cue ." snippet of the
/// selected passage, standing in for a perfect extractor.
fn cue_pairs(corpus: &[RcExample]) -> Vec<SynthesisPair> {
    corpus
        .iter()
        .map(|ex| {
            let sel = ex.selected_passage.unwrap();
            let passage = &ex.passages[sel];
            let topic = ex.question.last().unwrap();
            let start = passage.windows(2).position(|w| &w[0] == topic && w[1] == "is").unwrap();
            SynthesisPair {
                query_id: ex.query_id,
                question: ex.question.clone(),
                passage_index: sel,
                passage: passage.clone(),
                start,
                end: start + 3,
                target: ex.answer_tokens[0].clone(),
                source: PairSource::ModelExtracted,
            }
        })
        .collect()
}

fn low_bucket_rouge(corpus: &[RcExample], answers: &[Vec<String>]) -> (f64, usize) {
    let items: Vec<Scored> = corpus
        .iter()
        .zip(answers)
        .map(|(ex, a)| Scored {
            query_id: ex.query_id,
            hypothesis: a.clone(),
            references: ex.answer_tokens.clone(),
            oracle: gold_span_for(ex, &SpanSearch::exact()).unwrap().rouge,
        })
        .collect();
    let report = EvalReport::compute(&items, None).unwrap();
    let low = report.bucket_table.last().unwrap();
    (low.mean_rouge, low.count)
}

pub fn yes_no() -> Verdict {
    let corpus = generate_synthetic_corpus(&CorpusSpec::new(50, 50, 10, 2, AnswerStyle::YesNo), 7).unwrap();
    let part1 = build_synthesis_training_set(&corpus, None, 0.5, &SpanSearch::exact()).unwrap();
    let pairs = cue_pairs(&corpus);
    let (reached, model) = train_until(&corpus, &pairs, YES_NO_TARGET, 1);
    let m = evaluate_synthesis(&model, &pairs, BEAM, MAX_LEN).unwrap();
    let synthesized: Vec<Vec<String>> = m.outputs.iter().map(|g| g.answer.clone()).collect();
    let extracted: Vec<Vec<String>> = pairs.iter().map(|p| p.span_tokens().to_vec()).collect();
    let (syn, n) = low_bucket_rouge(&corpus, &synthesized);
    let (ext, _) = low_bucket_rouge(&corpus, &extracted);
    Verdict::new(
        reached.is_some() && n == corpus.len() && syn - ext >= BUCKET_GAP,
        format!(
            "{} gold-span pairs pass the 0.5 filter; accuracy >= {YES_NO_TARGET} at epoch {reached:?}, final {:.3}; \
             max < 0.2 bucket ({n} questions) ROUGE-L synthesis {syn:.3} vs extraction {ext:.3}, gap >= {BUCKET_GAP}",
            part1.len(),
            m.exact_match
        ),
    )
}

pub fn copy_task() -> Verdict {
    let corpus = generate_synthetic_corpus(&CorpusSpec::new(50, 50, 10, 2, AnswerStyle::ExactSpan), 6).unwrap();
    let pairs = build_synthesis_training_set(&corpus, None, 0.5, &SpanSearch::exact()).unwrap();
    let (reached, model) = train_until(&corpus, &pairs, COPY_TARGET, 0);
    let m = evaluate_synthesis(&model, &pairs, BEAM, MAX_LEN).unwrap();
    Verdict::new(
        reached.is_some(),
        format!("{} pairs; EM >= {COPY_TARGET} at epoch {reached:?}; final EM {:.3}", pairs.len(), m.exact_match),
    )
}
