use rand::Rng;
use snet_autodiff::gradcheck::{check_inputs, check_params, GradCheckConfig, GradCheckReport};
use snet_autodiff::rng::stream;
use snet_autodiff::{ParamStore, Result, Tape, Tensor, Var};
use snet_core::attention::Attention;
use snet_core::encoder::{BiGru, CharEncoder, GruCell};
use snet_core::extraction::{extraction_loss, joint_loss, ranking_loss, ExtractionConfig, ExtractionModel};
use snet_core::synthesis::{synthesis_loss, SynthesisConfig, SynthesisModel};
use snet_core::text::{PairSource, RcExample, SynthesisPair, Vocabulary};

use crate::Verdict;

const TRIALS: u64 = 3;
const BUDGET_SECS: f64 = 120.0;

type Build = fn(&mut Tape<f64>, &[Var], &Shapes) -> Result<Var>;

/// Random toy dimensions for one trial.
struct Shapes {
    rows: usize,
    cols: usize,
    inner: usize,
    seed: u64,
}

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Weights every output entry differently before summing.
fn weigh(tape: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(v).to_vec();
    let w = tape.constant(random(&shape, &mut stream(seed, "weights")));
    let p = tape.mul(v, w)?;
    Ok(tape.sum(p))
}

fn ops() -> Vec<(&'static str, fn(&Shapes) -> Vec<Vec<usize>>, Build)> {
    vec![
        ("matmul", |s| vec![vec![s.rows, s.inner], vec![s.inner, s.cols]], |t, v, s| {
            let y = t.matmul(v[0], v[1])?;
            weigh(t, y, s.seed)
        }),
        ("linear", |s| vec![vec![s.rows, s.inner], vec![s.cols, s.inner]], |t, v, s| {
            let y = t.linear(v[0], v[1])?;
            weigh(t, y, s.seed)
        }),
        ("add", |s| vec![vec![s.rows, s.cols]; 2], |t, v, s| {
            let y = t.add(v[0], v[1])?;
            weigh(t, y, s.seed)
        }),
        ("sub", |s| vec![vec![s.rows, s.cols]; 2], |t, v, s| {
            let y = t.sub(v[0], v[1])?;
            weigh(t, y, s.seed)
        }),
        ("mul", |s| vec![vec![s.rows, s.cols]; 2], |t, v, s| {
            let y = t.mul(v[0], v[1])?;
            weigh(t, y, s.seed)
        }),
        ("add_row", |s| vec![vec![s.rows, s.cols], vec![1, s.cols]], |t, v, s| {
            let y = t.add_row(v[0], v[1])?;
            weigh(t, y, s.seed)
        }),
        ("affine", |s| vec![vec![s.rows, s.cols]], |t, v, s| {
            let y = t.affine(v[0], -1.7, 0.3);
            weigh(t, y, s.seed)
        }),
        ("scale", |s| vec![vec![s.rows, s.cols]], |t, v, s| {
            let y = t.scale(v[0], 2.5);
            weigh(t, y, s.seed)
        }),
        ("one_minus", |s| vec![vec![s.rows, s.cols]], |t, v, s| {
            let y = t.one_minus(v[0]);
            weigh(t, y, s.seed)
        }),
        ("sigmoid", |s| vec![vec![s.rows, s.cols]], |t, v, s| {
            let y = t.sigmoid(v[0]);
            weigh(t, y, s.seed)
        }),
        ("tanh", |s| vec![vec![s.rows, s.cols]], |t, v, s| {
            let y = t.tanh(v[0]);
            weigh(t, y, s.seed)
        }),
        ("log_floor", |s| vec![vec![s.rows, s.cols]], |t, v, s| {
            // shift into (1, 3) so the floor stays inactive
            let x = t.affine(v[0], 1.0, 2.0);
            let y = t.log_floor(x, 1e-12);
            weigh(t, y, s.seed)
        }),
        ("softmax", |s| vec![vec![1, s.cols + 1]], |t, v, s| {
            let n = s.cols + 1;
            let mask: Vec<bool> = (0..n).map(|i| i == 0 || (s.seed + i as u64) % 3 != 0).collect();
            let y = t.softmax(v[0], Some(&mask))?;
            let plain = t.softmax(v[0], None)?;
            let a = weigh(t, y, s.seed)?;
            let b = weigh(t, plain, s.seed + 1)?;
            t.add(a, b)
        }),
        ("log_softmax", |s| vec![vec![1, s.cols + 1]], |t, v, s| {
            let y = t.log_softmax(v[0]);
            weigh(t, y, s.seed)
        }),
        ("concat", |s| vec![vec![s.rows, s.cols], vec![s.rows, s.inner], vec![s.inner, s.cols]], |t, v, s| {
            let a = t.concat(&[v[0], v[1]], 1)?;
            let b = t.concat(&[v[0], v[2]], 0)?;
            let x = weigh(t, a, s.seed)?;
            let y = weigh(t, b, s.seed + 1)?;
            t.add(x, y)
        }),
        ("slice_rows", |s| vec![vec![s.rows + 2, s.cols]], |t, v, s| {
            let y = t.slice_rows(v[0], 1, s.rows)?;
            weigh(t, y, s.seed)
        }),
        ("row", |s| vec![vec![s.rows + 1, s.cols]], |t, v, s| {
            let y = t.row(v[0], s.rows)?;
            weigh(t, y, s.seed)
        }),
        ("split_rows", |s| vec![vec![s.rows + s.inner, s.cols]], |t, v, s| {
            let parts = t.split_rows(v[0], &[s.rows, s.inner])?;
            let a = weigh(t, parts[0], s.seed)?;
            let b = weigh(t, parts[1], s.seed + 1)?;
            t.add(a, b)
        }),
        ("reshape", |s| vec![vec![s.rows, s.cols]], |t, v, s| {
            let y = t.reshape(v[0], &[1, s.rows * s.cols])?;
            weigh(t, y, s.seed)
        }),
        ("maxout_pairs", |s| vec![vec![s.rows, 2 * s.cols]], |t, v, s| {
            let y = t.maxout_pairs(v[0])?;
            weigh(t, y, s.seed)
        }),
        ("sum", |s| vec![vec![s.rows, s.cols]], |t, v, _| {
            let y = t.tanh(v[0]);
            Ok(t.sum(y))
        }),
        ("add_all", |s| vec![vec![s.rows, s.cols]; 3], |t, v, s| {
            let y = t.add_all(v)?;
            weigh(t, y, s.seed)
        }),
        ("pick", |s| vec![vec![s.rows, s.cols]], |t, v, s| {
            let sq = t.mul(v[0], v[0])?;
            t.pick(sq, (s.seed as usize) % (s.rows * s.cols))
        }),
        ("gather_rows", |s| vec![vec![s.rows + 2, s.cols]], |t, v, s| {
            let ids: Vec<usize> = (0..s.inner + 2).map(|i| (i * 7 + s.seed as usize) % (s.rows + 2)).collect();
            let y = t.gather_rows(v[0], &ids, None)?;
            weigh(t, y, s.seed)
        }),
        ("dropout", |s| vec![vec![s.rows, s.cols]], |t, v, s| {
            // same mask on every evaluation
            let y = t.dropout(v[0], 0.4, true, &mut stream(s.seed, "mask"))?;
            weigh(t, y, s.seed)
        }),
    ]
}

fn record(failures: &mut Vec<String>, checked: &mut usize, what: &str, report: &GradCheckReport) {
    *checked += report.checked;
    if !report.passed() {
        failures.push(format!("{what}: {} bad, worst {:?}", report.failures.len(), report.worst));
    }
}

fn components(failures: &mut Vec<String>, checked: &mut usize, seed: u64) {
    let mut rng = stream(seed, "components");
    let (input, hidden, steps) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..5));
    let mut store = ParamStore::new();
    let gru = GruCell::new(&mut store, "gru", input, hidden, &mut rng);
    let bigru = BiGru::new(&mut store, "bigru", input, hidden, &mut rng);
    let att = Attention::new(&mut store, "att", input, Some(hidden), 3, &mut rng);
    let chars = CharEncoder::new(&mut store, "chars", 2, hidden, &mut rng);
    let xs = random(&[steps, input], &mut rng);
    let query = random(&[1, hidden], &mut rng);
    let store = store.cast::<f64>();
    let cfg = GradCheckConfig::composite();
    let report = check_params(&store, cfg, |t| {
        let x = t.constant(xs.clone());
        let states = gru.run(t, x, seed % 2 == 0)?;
        let all = t.concat(&states, 0)?;
        let enc = bigru.encode(t, x)?;
        let q = t.constant(query.clone());
        let pooled = att.pool(t, x, Some(q))?;
        let words = chars.embed_words(t, &["ab", "c", "dab"])?;
        let mut terms = vec![weigh(t, all, 1)?, weigh(t, enc.states, 2)?, weigh(t, pooled.vector, 3)?];
        terms.push(weigh(t, words, 4)?);
        Ok::<_, snet_core::Error>(t.add_all(&terms)?)
    })
    .unwrap();
    record(failures, checked, &format!("encoder components (trial {seed})"), &report);
}

fn extraction_model(failures: &mut Vec<String>, checked: &mut usize) {
    let passages = [("a b x is here .".to_string(), true), ("c d x e".to_string(), false)];
    let ex = RcExample::from_text(1, "where is x", &passages, vec!["x is here".into()]).unwrap();
    let vocab = Vocabulary::build([ex.question.as_slice(), &ex.passages[0], &ex.passages[1]], 100).unwrap();
    for (bidirectional_match, use_chars) in [(false, true), (true, true), (false, false)] {
        let cfg = ExtractionConfig {
            word_dim: 3,
            char_dim: 2,
            char_hidden: 2,
            hidden: 3,
            att_dim: 3,
            use_chars,
            bidirectional_match,
            ..ExtractionConfig::default()
        };
        let m = ExtractionModel::new(cfg, vocab.clone(), None, &mut stream(5, "init")).unwrap();
        let input = m.input(&ex).unwrap();
        let store = m.store.cast::<f64>();
        for categorical in [false, true] {
            let report = check_params(&store, GradCheckConfig::composite(), |t| {
                let out = m.forward::<f64, snet_autodiff::rng::Rng>(t, &input, true, None)?;
                let span = extraction_loss(t, out.start, out.end, (2, 4), categorical)?;
                let rank = ranking_loss(t, out.rank_probs.unwrap(), 0)?;
                joint_loss(t, span, rank, 0.8)
            })
            .unwrap();
            let what = format!("extraction model (match both ways {bidirectional_match}, chars {use_chars}, categorical {categorical})");
            record(failures, checked, &what, &report);
        }
    }
}

fn synthesis_model(failures: &mut Vec<String>, checked: &mut usize) {
    let words = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    let pair = SynthesisPair {
        query_id: 1,
        question: words("a b"),
        passage_index: 0,
        passage: words("c a b c"),
        start: 1,
        end: 2,
        target: words("a b x"),
        source: PairSource::GoldSpan,
    };
    for position_features in [true, false] {
        let cfg = SynthesisConfig {
            word_dim: 3,
            feature_dim: 2,
            hidden: 3,
            att_dim: 3,
            position_features,
        };
        let mut m = SynthesisModel::new(cfg, Vocabulary::from_tokens(words("a b c")).unwrap(), &mut stream(6, "init")).unwrap();
        // zero-initialised layers would hide gradient paths
        let mut rng = stream(7, "spread");
        let ids: Vec<_> = m.store.ids().collect();
        for id in ids {
            for x in m.store.get_mut(id).data_mut() {
                *x = rng.random_range(-0.5..0.5);
            }
        }
        let store = m.store.cast::<f64>();
        let report = check_params(&store, GradCheckConfig::composite(), |t| synthesis_loss(&m, t, &pair)).unwrap();
        record(failures, checked, &format!("synthesis model (position features {position_features})"), &report);
    }
}

pub fn suite() -> Verdict {
    let start = std::time::Instant::now();
    let mut failures = Vec::new();
    let mut checked = 0;
    let ops = ops();
    for trial in 0..TRIALS {
        let mut rng = stream(trial, "shapes");
        for (i, (name, shapes, build)) in ops.iter().enumerate() {
            let s = Shapes {
                rows: rng.random_range(1..4),
                cols: rng.random_range(1..4),
                inner: rng.random_range(1..4),
                seed: trial * 100 + i as u64,
            };
            let inputs: Vec<Tensor<f64>> = shapes(&s).iter().map(|sh| random(sh, &mut rng)).collect();
            let report = check_inputs(&inputs, GradCheckConfig::elementwise(), |t, v| build(t, v, &s)).unwrap();
            record(&mut failures, &mut checked, &format!("{name} (trial {trial})"), &report);
        }
        components(&mut failures, &mut checked, trial);
    }
    extraction_model(&mut failures, &mut checked);
    synthesis_model(&mut failures, &mut checked);
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{} ops x {TRIALS} random shapes at rtol 1e-4, components and both models at 1e-3: {checked} partials, {} failing checks, {secs:.1}s of {BUDGET_SECS}s",
        ops.len(),
        failures.len()
    );
    let detail = if failures.is_empty() { detail } else { format!("{detail}; {}", failures.join("; ")) };
    Verdict::new(failures.is_empty() && secs < BUDGET_SECS, detail)
}
