use rand::Rng;
use snet_autodiff::rng::stream;
use snet_core::extraction::decode_span;
use snet_core::metrics::{bleu_1_corpus, lcs_length, rouge_l};
use snet_core::text::{select_gold_span, SpanSearch};

use crate::Verdict;

const SPAN_INSTANCES: u64 = 200;
const MAX_TOKENS: usize = 40;
const ROUGE_TOL: f64 = 1e-12;
const LCS_MAX_LEN: usize = 8;
const DECODE_INSTANCES: u64 = 500;
const DECODE_MAX_N: usize = 30;

/// Top-down LCS over a fixed table, independent of the library's rolling row.
fn lcs_reference<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    fn go<S: PartialEq>(a: &[S], b: &[S], i: usize, j: usize, memo: &mut [Vec<Option<usize>>]) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(v) = memo[i][j] {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo[i][j] = Some(v);
        v
    }
    let mut memo = vec![vec![None; b.len()]; a.len()];
    go(a, b, 0, 0, &mut memo)
}

fn f_measure(lcs: usize, hyp: usize, reference: usize) -> f64 {
    if lcs == 0 {
        return 0.0;
    }
    let (p, r) = (lcs as f64 / hyp as f64, lcs as f64 / reference as f64);
    let b2 = 1.2f64 * 1.2;
    (1.0 + b2) * p * r / (r + b2 * p)
}

fn brute_span(tokens: &[String], refs: &[Vec<String>]) -> (usize, usize, f64) {
    let mut best = (0, 0, -1.0);
    for len in 1..=tokens.len() {
        for i in 0..=tokens.len() - len {
            let span = &tokens[i..i + len];
            let score = refs
                .iter()
                .map(|r| f_measure(lcs_reference(span, r), len, r.len()))
                .fold(0.0, f64::max);
            // shorter spans come first, earlier starts first within a length
            if score > best.2 + ROUGE_TOL {
                best = (i, i + len - 1, score);
            }
        }
    }
    best
}

fn words(n: usize, alphabet: usize, rng: &mut impl Rng) -> Vec<String> {
    (0..n).map(|_| format!("w{}", rng.random_range(0..alphabet))).collect()
}

fn gold_spans() -> Result<String, String> {
    let mut rng = stream(21, "gold spans");
    let mut ties = 0;
    for case in 0..SPAN_INSTANCES {
        let n = rng.random_range(1..=MAX_TOKENS);
        let alphabet = rng.random_range(2..10);
        let tokens = words(n, alphabet, &mut rng);
        let refs: Vec<Vec<String>> = (0..rng.random_range(1..4))
            .map(|_| {
                let len = rng.random_range(1..8);
                words(len, alphabet + 2, &mut rng)
            })
            .collect();
        let got = select_gold_span(&tokens, &refs, &SpanSearch::exact()).map_err(|e| e.to_string())?;
        let (s, e, score) = brute_span(&tokens, &refs);
        if (got.start, got.end) != (s, e) || (got.rouge - score).abs() > ROUGE_TOL {
            return Err(format!("instance {case}: got {got:?}, brute force ({s}, {e}, {score})"));
        }
        let tied = (1..=n)
            .flat_map(|len| (0..=n - len).map(move |i| (i, len)))
            .filter(|&(i, len)| {
                let span = &tokens[i..i + len];
                let sc = refs.iter().map(|r| f_measure(lcs_reference(span, r), len, r.len())).fold(0.0, f64::max);
                (sc - score).abs() <= ROUGE_TOL
            })
            .count();
        if tied > 1 {
            ties += 1;
        }
    }
    Ok(format!("gold span = brute force on {SPAN_INSTANCES} instances (N <= {MAX_TOKENS}, {ties} with tied optima)"))
}

/// All sequences over {0, 1, 2} up to `max_len`.
fn all_sequences(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|s: &Vec<u8>| (0..3).map(move |c| [s.as_slice(), &[c]].concat()))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Symbols appear in first-use order, so each relabeling class has one member.
fn canonical(s: &[u8]) -> bool {
    let mut next = 0;
    s.iter().all(|&c| {
        if c > next {
            return false;
        }
        if c == next {
            next += 1;
        }
        true
    })
}

fn lcs_exhaustive() -> Result<String, String> {
    let all = all_sequences(LCS_MAX_LEN);
    let firsts: Vec<&Vec<u8>> = all.iter().filter(|s| canonical(s)).collect();
    let mut pairs = 0u64;
    for a in &firsts {
        for b in &all {
            let (got, want) = (lcs_length(a, b), lcs_reference(a, b));
            if got != want {
                return Err(format!("lcs({a:?}, {b:?}) = {got}, reference {want}"));
            }
            pairs += 1;
        }
    }
    let covered = all.len() as u64 * all.len() as u64;
    Ok(format!(
        "lcs = memoized reference on {pairs} pairs covering all {covered} up to relabeling (lengths <= {LCS_MAX_LEN})"
    ))
}

fn decode_brute(start: &[f32], end: &[f32], cap: Option<usize>) -> (usize, usize) {
    let n = start.len();
    let mut pairs: Vec<(f32, usize, usize)> = (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .filter(|&(i, j)| cap.is_none_or(|c| j - i < c))
        .map(|(i, j)| (start[i] * end[j], i, j))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    (pairs[0].1, pairs[0].2)
}

fn decoding() -> Result<String, String> {
    let mut rng = stream(22, "decode");
    for case in 0..DECODE_INSTANCES {
        let n = rng.random_range(1..=DECODE_MAX_N);
        // coarse levels force many equal products
        let mut probs = || -> Vec<f32> { (0..n).map(|_| rng.random_range(0..5) as f32 / 8.0).collect() };
        let (start, end) = (probs(), probs());
        let cap = rng.random_bool(0.5).then(|| rng.random_range(1..=n + 2));
        let got = decode_span(&start, &end, cap);
        let want = decode_brute(&start, &end, cap);
        if got != want {
            return Err(format!("instance {case} (cap {cap:?}): got {got:?}, brute force {want:?}"));
        }
    }
    Ok(format!("span decoding = N^2 brute force on {DECODE_INSTANCES} instances (N <= {DECODE_MAX_N})"))
}

pub fn equivalence() -> Verdict {
    let results = [gold_spans(), lcs_exhaustive(), decoding()];
    let passed = results.iter().all(Result::is_ok);
    let detail = results.iter().map(|r| r.clone().unwrap_or_else(|e| format!("MISMATCH {e}"))).collect::<Vec<_>>();
    Verdict::new(passed, detail.join("; "))
}

const ROUGE_CASE: f64 = 0.7722;
const ROUGE_CASE_TOL: f64 = 1e-4;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn fixtures() -> Verdict {
    let mut checks: Vec<(String, bool)> = Vec::new();
    let r = rouge_l(&toks("the cat"), &[toks("the cat sat")]).unwrap();
    checks.push((format!("rouge 'the cat' vs 'the cat sat' = {r:.6}"), (r - ROUGE_CASE).abs() <= ROUGE_CASE_TOL));
    let b = bleu_1_corpus(&[(toks("a a"), vec![toks("a b")])]);
    checks.push((format!("bleu-1 'a a' vs 'a b' = {b}"), b == 0.5));
    let same = rouge_l(&toks("x y z"), &[toks("x y z")]).unwrap();
    checks.push((format!("rouge identical = {same}"), same == 1.0));
    let max = rouge_l(&toks("x y"), &[toks("q"), toks("x y")]).unwrap();
    checks.push((format!("rouge with one identical reference = {max}"), max == 1.0));
    let corpus = vec![(toks("a b c"), vec![toks("a b c")]), (toks("d"), vec![toks("e"), toks("d")])];
    let bleu = bleu_1_corpus(&corpus);
    checks.push((format!("bleu-1 identical corpus = {bleu}"), bleu == 1.0));
    let with_empty = bleu_1_corpus(&[(Vec::<String>::new(), vec![toks("a")]), (toks("a"), vec![toks("a")])]);
    checks.push((format!("bleu-1 with an empty hypothesis = {with_empty:.4}"), with_empty.is_finite()));
    let passed = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(d, ok)| if *ok { d.clone() } else { format!("{d} WRONG") })
        .collect::<Vec<_>>()
        .join(", ");
    Verdict::new(passed, detail)
}
