use snet_autodiff::gradcheck::{check_params, GradCheckConfig};
use snet_autodiff::rng::stream;
use snet_autodiff::{Tape, Tensor};
use snet_core::extraction::{
    extraction_loss, joint_loss, ranking_loss, train_extraction, ExtractionConfig, ExtractionInput, ExtractionMode,
    ExtractionModel, TrainConfig,
};
use snet_core::text::{
    build_extraction_training_set, generate_synthetic_corpus, AnswerStyle, CorpusSpec, RcExample, SpanSearch,
    Vocabulary, EXTRACTION_THRESHOLD,
};
use snet_core::Error;

fn tiny_config() -> ExtractionConfig {
    ExtractionConfig {
        word_dim: 3,
        char_dim: 2,
        char_hidden: 2,
        hidden: 4,
        att_dim: 3,
        ..ExtractionConfig::default()
    }
}

fn example(question: &str, passages: &[&str], selected: usize, answer: &str) -> RcExample {
    let ps: Vec<(String, bool)> = passages
        .iter()
        .enumerate()
        .map(|(i, p)| (p.to_string(), i == selected))
        .collect();
    RcExample::from_text(1, question, &ps, vec![answer.to_string()]).unwrap()
}

fn vocab_for(examples: &[RcExample]) -> Vocabulary {
    let mut streams: Vec<Vec<String>> = Vec::new();
    for ex in examples {
        streams.push(ex.question.clone());
        streams.extend(ex.passages.iter().cloned());
    }
    Vocabulary::build(streams.iter().map(|s| s.as_slice()), 1000).unwrap()
}

fn model(cfg: ExtractionConfig, examples: &[RcExample], seed: u64) -> ExtractionModel {
    ExtractionModel::new(cfg, vocab_for(examples), None, &mut stream(seed, "init")).unwrap()
}

fn forward_values(m: &ExtractionModel, input: &ExtractionInput) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut tape = Tape::with_params(&m.store);
    let out = m.forward::<f32, snet_autodiff::rng::Rng>(&mut tape, input, true, None).unwrap();
    (
        tape.value(out.start).data().to_vec(),
        tape.value(out.end).data().to_vec(),
        tape.value(out.rank_probs.unwrap()).data().to_vec(),
    )
}

fn sums_to_one(v: &[f32]) -> bool {
    v.iter().all(|&x| x >= 0.0) && (v.iter().map(|&x| x as f64).sum::<f64>() - 1.0).abs() < 1e-6
}

#[test]
fn whole_model_gradient_check() {
    let ex = example("where is x", &["a b x is here", "c d e"], 0, "x is here");
    for bidirectional_match in [false, true] {
        let cfg = ExtractionConfig {
            bidirectional_match,
            ..tiny_config()
        };
        let m = model(cfg, std::slice::from_ref(&ex), 3);
        let input = m.input(&ex).unwrap();
        let store = m.store.cast::<f64>();
        let report = check_params(&store, GradCheckConfig::composite(), |tape| {
            let out = m.forward::<f64, snet_autodiff::rng::Rng>(tape, &input, true, None)?;
            let span = extraction_loss(tape, out.start, out.end, (2, 4), false)?;
            let rank = ranking_loss(tape, out.rank_probs.unwrap(), 0)?;
            joint_loss(tape, span, rank, 0.8)
        })
        .unwrap();
        assert!(report.passed(), "{} failures, worst {:?}", report.failures.len(), report.worst);
        assert!(report.checked > 500);
    }
}

#[test]
fn distributions_are_valid() {
    let ex = example("what about it", &["one two three", "four five", "six"], 1, "four");
    let m = model(tiny_config(), std::slice::from_ref(&ex), 4);
    let (s, e, g) = forward_values(&m, &m.input(&ex).unwrap());
    assert_eq!(s.len(), 6);
    assert!(sums_to_one(&s) && sums_to_one(&e) && sums_to_one(&g));
    let p = m.predict(&ex).unwrap();
    assert!(p.span.0 <= p.span.1);
}

#[test]
fn single_position_and_single_passage() {
    let ex = example("q", &["only"], 0, "only");
    let m = model(tiny_config(), std::slice::from_ref(&ex), 5);
    let p = m.predict(&ex).unwrap();
    assert_eq!(p.span, (0, 0));
    assert_eq!(p.start_probs, vec![1.0]);
    assert_eq!(p.end_probs, vec![1.0]);
    assert_eq!(p.passage_scores, vec![1.0]);
}

#[test]
fn duplicate_passages_score_identically() {
    let ex = example("what about w1", &["w1 is w2 .", "w3 w4 w5", "w1 is w2 ."], 0, "w2");
    let m = model(tiny_config(), std::slice::from_ref(&ex), 6);
    let (_, _, g) = forward_values(&m, &m.input(&ex).unwrap());
    assert_eq!(g[0], g[2]);
    assert_ne!(g[0], g[1]);
}

#[test]
fn r_one_zeroes_ranking_gradients() {
    let ex = example("where is x", &["a b x", "c d"], 0, "x");
    let m = model(tiny_config(), std::slice::from_ref(&ex), 7);
    let input = m.input(&ex).unwrap();
    let mut tape = Tape::with_params(&m.store);
    let out = m.forward::<f32, snet_autodiff::rng::Rng>(&mut tape, &input, true, None).unwrap();
    let span = extraction_loss(&mut tape, out.start, out.end, (2, 2), false).unwrap();
    let rank = ranking_loss(&mut tape, out.rank_probs.unwrap(), 0).unwrap();
    let l = joint_loss(&mut tape, span, rank, 1.0).unwrap();
    let grads = tape.backward(l).unwrap();
    let p = &m.params;
    let mut ranking_ids = vec![p.rank_w, p.rank_v, p.rank_pool.w_key, p.rank_pool.v];
    ranking_ids.extend(p.rank_pool.w_query);
    for id in ranking_ids {
        if let Some(g) = grads.param(id) {
            assert!(g.data().iter().all(|&x| x == 0.0), "{} has gradient", m.store.name(id));
        }
    }
    // the span head does learn
    let g = grads.param(p.pointer.v).unwrap();
    assert!(g.data().iter().any(|&x| x != 0.0));
}

#[test]
fn frozen_word_table_gets_no_gradient() {
    let ex = example("where is x", &["a b x", "c d"], 0, "x");
    let m = model(tiny_config(), std::slice::from_ref(&ex), 8);
    assert!(!m.store.is_trainable(m.params.word.id));
    let input = m.input(&ex).unwrap();
    let mut tape = Tape::with_params(&m.store);
    let out = m.forward::<f32, snet_autodiff::rng::Rng>(&mut tape, &input, true, None).unwrap();
    let l = extraction_loss(&mut tape, out.start, out.end, (2, 2), false).unwrap();
    let grads = tape.backward(l).unwrap();
    assert!(grads.param(m.params.word.id).is_none_or(|g| g.data().iter().all(|&x| x == 0.0)));
}

#[test]
fn question_vector_properties() {
    let ex = example("a b c", &["x"], 0, "x");
    let m = model(tiny_config(), std::slice::from_ref(&ex), 9);
    let mut tape = Tape::with_params(&m.store);
    let one = tape.constant(Tensor::row(vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6, -0.7, 0.8]));
    let rq = m.question_vector(&mut tape, one).unwrap();
    assert_eq!(tape.value(rq).data(), tape.value(one).data());

    let rows = [
        [0.1f32, 0.2, 0.3, -0.4, 0.5, 0.6, -0.7, 0.8],
        [0.9, -0.1, 0.0, 0.4, -0.5, 0.2, 0.7, 0.3],
        [-0.3, 0.3, 0.6, 0.1, 0.0, -0.2, 0.5, -0.9],
    ];
    let a = tape.constant(Tensor::new(&[3, 8], rows.concat()).unwrap());
    let b = tape.constant(Tensor::new(&[3, 8], [rows[2], rows[0], rows[1]].concat()).unwrap());
    let ra = m.question_vector(&mut tape, a).unwrap();
    let rb = m.question_vector(&mut tape, b).unwrap();
    assert_eq!(tape.shape(ra), &[1, 8]);
    for (x, y) in tape.value(ra).data().iter().zip(tape.value(rb).data()) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn matching_first_step_uses_attention_pool() {
    let ex = example("a b", &["x y z"], 0, "x");
    let m = model(tiny_config(), std::slice::from_ref(&ex), 10);
    let mut tape = Tape::with_params(&m.store);
    let uq = tape.constant(Tensor::new(&[2, 8], (0..16).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap());
    let up = tape.constant(Tensor::new(&[3, 8], (0..24).map(|i| (i as f32 * 0.11).cos()).collect()).unwrap());
    let v = m.gated_match(&mut tape, uq, up).unwrap();
    assert_eq!(tape.shape(v), &[3, 4]);
    // recompute step one through the public pieces
    let layer = &m.params.matcher;
    let u1 = tape.row(up, 0).unwrap();
    let v0 = layer.gru.zero_state(&mut tape, 1);
    let query = tape.concat(&[u1, v0], 1).unwrap();
    let c = layer.attention.pool(&mut tape, uq, Some(query)).unwrap().vector;
    let joined = tape.concat(&[u1, c], 1).unwrap();
    let w = tape.param(layer.gate);
    let g = tape.linear(joined, w).unwrap();
    let g = tape.sigmoid(g);
    let gated = tape.mul(g, joined).unwrap();
    let v1 = layer.gru.step(&mut tape, v0, gated).unwrap();
    assert_eq!(tape.value(v).row_slice(0), tape.value(v1).data());
}

#[test]
fn closed_gate_keeps_state_at_zero() {
    let ex = example("a b", &["x y z"], 0, "x");
    let mut m = model(tiny_config(), std::slice::from_ref(&ex), 11);
    let gru = m.params.matcher.gru.clone();
    for id in [gru.w_hz, gru.w_xz, gru.b_z, gru.w_hr, gru.w_xr, gru.b_r, gru.w_h, gru.w_x, gru.b] {
        m.store.get_mut(id).data_mut().fill(0.0);
    }
    let mut tape = Tape::with_params(&m.store);
    let uq = tape.constant(Tensor::new(&[2, 8], vec![0.5; 16]).unwrap());
    let up = tape.constant(Tensor::new(&[3, 8], vec![-0.5; 24]).unwrap());
    let v = m.gated_match(&mut tape, uq, up).unwrap();
    assert!(tape.value(v).data().iter().all(|&x| x == 0.0));
}

#[test]
fn loss_trends_down_on_synthetic_corpus() {
    let corpus = generate_synthetic_corpus(&CorpusSpec::new(20, 30, 8, 2, AnswerStyle::ExactSpan), 1).unwrap();
    let pairs = build_extraction_training_set(&corpus, EXTRACTION_THRESHOLD, &SpanSearch::exact()).unwrap();
    assert_eq!(pairs.len(), 20);
    let cfg = ExtractionConfig {
        word_dim: 8,
        char_dim: 4,
        char_hidden: 4,
        hidden: 8,
        att_dim: 8,
        ..ExtractionConfig::default()
    };
    let mut m = model(cfg, &corpus, 12);
    let train = TrainConfig {
        epochs: 10,
        batch_size: 4,
        eval_every: 0,
        ..TrainConfig::default()
    };
    let history = train_extraction(&mut m, &corpus, &pairs, &[], &train, ExtractionMode::Joint, |_| {}).unwrap();
    let upticks = history.windows(2).filter(|w| w[1].loss > w[0].loss).count();
    assert!(upticks <= 2, "{:?}", history.iter().map(|h| h.loss).collect::<Vec<_>>());
    assert!(history.last().unwrap().loss < history[0].loss);
}

#[test]
fn training_is_deterministic_and_rejects_bad_config() {
    let corpus = generate_synthetic_corpus(&CorpusSpec::new(6, 30, 8, 2, AnswerStyle::ExactSpan), 2).unwrap();
    let pairs = build_extraction_training_set(&corpus, EXTRACTION_THRESHOLD, &SpanSearch::exact()).unwrap();
    let run = || {
        let mut m = model(tiny_config(), &corpus, 13);
        let train = TrainConfig {
            epochs: 2,
            batch_size: 3,
            dropout: 0.2,
            eval_every: 0,
            ..TrainConfig::default()
        };
        train_extraction(&mut m, &corpus, &pairs, &[], &train, ExtractionMode::Joint, |_| {}).unwrap();
        m.store.iter().flat_map(|(_, _, t)| t.data().to_vec()).map(f32::to_bits).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
    let mut m = model(tiny_config(), &corpus, 13);
    let bad = TrainConfig {
        r: 1.5,
        ..TrainConfig::default()
    };
    assert!(matches!(
        train_extraction(&mut m, &corpus, &pairs, &[], &bad, ExtractionMode::Joint, |_| {}),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        train_extraction(&mut m, &corpus, &[], &[], &TrainConfig::default(), ExtractionMode::Joint, |_| {}),
        Err(Error::Data(_))
    ));
}
