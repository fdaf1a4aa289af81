use rand::Rng;
use snet_autodiff::rng::stream;
use snet_core::synthesis::{beam_search, greedy, post_process, SynthesisConfig, SynthesisInput, SynthesisModel};
use snet_core::text::Vocabulary;

use crate::Verdict;

const MODELS: u64 = 100;
const PARAM_RANGE: f32 = 2.0;
const WIDE_BEAM: usize = 12;
const MAX_LEN: usize = 10;
const RANDOM_CASES: u64 = 2000;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn pick(words: &[String], n: usize, rng: &mut impl Rng) -> Vec<String> {
    (0..n).map(|_| words[rng.random_range(0..words.len())].clone()).collect()
}

fn tiny_model(seed: u64) -> (SynthesisModel, SynthesisInput) {
    let mut rng = stream(seed, "beam model");
    let words: Vec<String> = (0..rng.random_range(2..7)).map(|i| format!("t{i}")).collect();
    let cfg = SynthesisConfig {
        word_dim: rng.random_range(2..5),
        feature_dim: 2,
        hidden: rng.random_range(2..5),
        att_dim: 3,
        position_features: rng.random_bool(0.7),
    };
    let mut m = SynthesisModel::new(cfg, Vocabulary::from_tokens(words.clone()).unwrap(), &mut rng).unwrap();
    let ids: Vec<_> = m.store.ids().collect();
    for id in ids {
        for x in m.store.get_mut(id).data_mut() {
            *x = rng.random_range(-PARAM_RANGE..PARAM_RANGE);
        }
    }
    // out-of-vocabulary words exercise the unknown embedding
    let mut pool = words;
    pool.push("zz".into());
    let q = pick(&pool, rng.random_range(1..4), &mut rng);
    let p = pick(&pool, rng.random_range(1..7), &mut rng);
    let start = rng.random_range(0..p.len());
    let end = rng.random_range(start..p.len());
    let input = SynthesisInput::new(&m.vocab, &q, &p, start, end).unwrap();
    (m, input)
}

pub fn beam() -> Verdict {
    let (mut greedy_mismatch, mut worse) = (Vec::new(), Vec::new());
    let (mut improved, mut completed) = (0, 0);
    for seed in 0..MODELS {
        let (m, input) = tiny_model(seed);
        let g = greedy(&m, &input, MAX_LEN).unwrap();
        let one = beam_search(&m, &input, 1, MAX_LEN).unwrap();
        let wide = beam_search(&m, &input, WIDE_BEAM, MAX_LEN).unwrap();
        if g != one {
            greedy_mismatch.push(seed);
        }
        if wide.log_prob < one.log_prob {
            worse.push(format!("{seed} ({} < {})", wide.log_prob, one.log_prob));
        }
        improved += usize::from(wide.log_prob > one.log_prob);
        completed += usize::from(wide.completed);
    }
    let detail = format!(
        "{MODELS} random models (params in +-{PARAM_RANGE}): beam 1 = greedy on {}, beam {WIDE_BEAM} >= beam 1 on {} ({improved} strictly better, {completed} completed); mismatches {greedy_mismatch:?}, worse {worse:?}",
        MODELS as usize - greedy_mismatch.len(),
        MODELS as usize - worse.len(),
    );
    Verdict::new(greedy_mismatch.is_empty() && worse.is_empty(), detail)
}

fn is_blank(tokens: &[String]) -> bool {
    tokens.is_empty() || tokens == [Vocabulary::unk_token().to_string()]
}

pub fn post_processing() -> Verdict {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, got: Vec<String>, want: &str| {
        if got != toks(want) {
            failures.push(format!("{name}: got {:?}", got.join(" ")));
        }
    };
    let passage = toks("the film was directed by spielberg in 1994 and won");
    check("duplicate words", post_process(&toks("the the answer answer"), &toks("the answer"), &toks("the answer")), "the answer");
    check(
        "duplicate phrase",
        post_process(&toks("new york new york city"), &toks("new york city"), &toks("in new york city")),
        "new york city",
    );
    check(
        "unknown between neighbours",
        post_process(&toks("directed by <unk> in 1994"), &toks("spielberg"), &passage),
        "directed by spielberg in 1994",
    );
    check(
        "word missing from span",
        post_process(&toks("directed by lucas in 1994"), &toks("directed by spielberg in 1994"), &passage),
        "directed by spielberg in 1994",
    );
    let height = "5'6 ( 167.64 cm )";
    check(
        "bare unknown",
        post_process(&toks("<unk>"), &toks(height), &toks("she is 5'6 ( 167.64 cm ) tall")),
        height,
    );
    check("empty output", post_process::<&str>(&[], &toks("yes"), &toks("yes it is")), "yes");
    let fixtures = failures.len();

    // random outputs over a small alphabet with unknown words mixed in
    let mut rng = stream(9, "post-process");
    let alphabet: Vec<String> = toks("a b c d e <unk>");
    let (mut not_idempotent, mut blank) = (0, 0);
    let mut example = None;
    for _ in 0..RANDOM_CASES {
        let passage = pick(&alphabet[..5], rng.random_range(1..12), &mut rng);
        let s = rng.random_range(0..passage.len());
        let e = rng.random_range(s..passage.len());
        let span = passage[s..=e].to_vec();
        let generated = pick(&alphabet, rng.random_range(0..9), &mut rng);
        let once = post_process(&generated, &span, &passage);
        let twice = post_process(&once, &span, &passage);
        if once != twice {
            not_idempotent += 1;
            example.get_or_insert_with(|| format!("{generated:?} / {span:?} / {passage:?}"));
        }
        blank += usize::from(is_blank(&once));
    }
    let passed = failures.is_empty() && not_idempotent == 0 && blank == 0;
    let mut detail = format!(
        "{} of 6 rule fixtures hold; {RANDOM_CASES} random outputs: {not_idempotent} not idempotent, {blank} bare unknown or empty",
        6 - fixtures
    );
    if !failures.is_empty() {
        detail += &format!("; {}", failures.join("; "));
    }
    if let Some(e) = example {
        detail += &format!("; first non-idempotent case {e}");
    }
    Verdict::new(passed, detail)
}
