use snet_autodiff::rng::stream;
use snet_core::extraction::{
    evaluate_extractor, train_extraction, ExtractionConfig, ExtractionMode, ExtractionModel, Extractor, TrainConfig,
};
use snet_core::pipeline::extraction_vocab;
use snet_core::text::{build_extraction_training_set, generate_synthetic_corpus, AnswerStyle, CorpusSpec, SpanSearch};

use crate::Verdict;

const OVERFIT_TARGET: f64 = 0.95;
const OVERFIT_EPOCHS: usize = 300;

pub fn overfit() -> Verdict {
    let corpus = generate_synthetic_corpus(&CorpusSpec::new(50, 50, 10, 2, AnswerStyle::ExactSpan), 4).unwrap();
    let pairs = build_extraction_training_set(&corpus, 0.7, &SpanSearch::exact()).unwrap();
    let cfg = ExtractionConfig {
        word_dim: 16,
        char_dim: 4,
        char_hidden: 4,
        hidden: 16,
        att_dim: 16,
        ..ExtractionConfig::default()
    };
    let vocab = extraction_vocab(&corpus, 1000).unwrap();
    let mut model = ExtractionModel::new(cfg, vocab, None, &mut stream(0, "init")).unwrap();
    let train = TrainConfig {
        epochs: OVERFIT_EPOCHS,
        batch_size: 5,
        eval_every: 10,
        ..TrainConfig::default()
    };
    let mut reached = None;
    train_extraction(&mut model, &corpus, &pairs, &corpus, &train, ExtractionMode::Joint, |e| {
        if reached.is_none() && e.dev_exact >= Some(OVERFIT_TARGET) && e.dev_p_at_1 >= Some(OVERFIT_TARGET) {
            reached = Some(e.epoch);
        }
    })
    .unwrap();
    let last = evaluate_extractor(&Extractor::Single(model), &corpus).unwrap();
    Verdict::new(
        reached.is_some(),
        format!(
            "EM and P@1 >= {OVERFIT_TARGET} first at epoch {reached:?}; after {OVERFIT_EPOCHS}: EM {:.3}, P@1 {:.3}",
            last.exact_match,
            last.p_at_1.unwrap_or(0.0)
        ),
    )
}

const RANKING_SEEDS: [u64; 3] = [0, 1, 2];
const RANKING_EPOCHS: usize = 30;

fn ranking_run(seed: u64, mode: ExtractionMode) -> f64 {
    let spec = CorpusSpec::new(500, 50, 10, 3, AnswerStyle::ExactSpan);
    let corpus = generate_synthetic_corpus(&spec, 100 + seed).unwrap();
    let dev = generate_synthetic_corpus(&CorpusSpec { n_examples: 200, ..spec }, 200 + seed).unwrap();
    let pairs = build_extraction_training_set(&corpus, 0.7, &SpanSearch::exact()).unwrap();
    let cfg = ExtractionConfig {
        word_dim: 16,
        char_dim: 4,
        char_hidden: 4,
        hidden: 16,
        att_dim: 16,
        ..ExtractionConfig::default()
    };
    let vocab = extraction_vocab(&corpus, 1000).unwrap();
    let mut model = ExtractionModel::new(cfg, vocab, None, &mut stream(seed, "init")).unwrap();
    let train = TrainConfig {
        epochs: RANKING_EPOCHS,
        batch_size: 8,
        eval_every: 0,
        seed,
        ..TrainConfig::default()
    };
    train_extraction(&mut model, &corpus, &pairs, &[], &train, mode, |_| {}).unwrap();
    evaluate_extractor(&Extractor::Single(model), &dev).unwrap().p_at_1.unwrap()
}

pub fn ranking_benefit() -> Verdict {
    let mut joint = Vec::new();
    let mut plain = Vec::new();
    for seed in RANKING_SEEDS {
        joint.push(ranking_run(seed, ExtractionMode::Joint));
        plain.push(ranking_run(seed, ExtractionMode::NoRanking));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (j, p) = (mean(&joint), mean(&plain));
    Verdict::new(
        j > p,
        format!("dev P@1 joint {j:.3} {joint:.3?} vs no-ranking span mass {p:.3} {plain:.3?}"),
    )
}
