//! Clean-up of generated answers against the evidence span and passage.

use std::collections::HashSet;

use crate::text::Vocabulary;

/// Longest phrase considered for de-duplication and repair.
pub const MAX_PHRASE: usize = 4;
const MAX_PASSES: usize = 16;

/// Keeps one copy of any word or phrase (up to [`MAX_PHRASE`] tokens) that is
/// immediately repeated.
pub fn collapse_repeats<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut out: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    'outer: loop {
        for len in 1..=MAX_PHRASE {
            if out.len() < 2 * len {
                break;
            }
            for i in 0..=out.len() - 2 * len {
                if out[i..i + len] == out[i + len..i + 2 * len] {
                    out.drain(i + len..i + 2 * len);
                    continue 'outer;
                }
            }
        }
        return out;
    }
}

/// Earliest `left · fill · right` in `source` with 1 to [`MAX_PHRASE`] fill tokens.
fn find_fill<'s>(source: &'s [String], left: &str, right: &str) -> Option<&'s [String]> {
    for p in 0..source.len() {
        if source[p] != left {
            continue;
        }
        let last = (p + 1 + MAX_PHRASE).min(source.len().saturating_sub(1));
        for q in p + 2..=last {
            if source[q] == right {
                return Some(&source[p + 1..q]);
            }
        }
    }
    None
}

fn fill_between<'s>(span: &'s [String], passage: &'s [String], left: &str, right: &str) -> Option<&'s [String]> {
    find_fill(span, left, right).or_else(|| find_fill(passage, left, right))
}

/// Replaces unknown words, and words missing from the span, by the segment
/// found between the same neighbours in the span (first) or the passage.
/// A run that cannot be repaired whole falls back to repairing its unknown
/// words one at a time.
pub fn repair(tokens: &[String], span: &[String], passage: &[String]) -> Vec<String> {
    let unk = Vocabulary::unk_token();
    let in_span: HashSet<&str> = span.iter().map(String::as_str).collect();
    let bad = |t: &str| t == unk || !in_span.contains(t);
    let n = tokens.len();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if !bad(&tokens[i]) {
            out.push(tokens[i].clone());
            i += 1;
            continue;
        }
        let a = i;
        while i < n && bad(&tokens[i]) {
            i += 1;
        }
        let b = i;
        let whole = (a > 0 && b < n && b - a <= MAX_PHRASE)
            .then(|| fill_between(span, passage, &tokens[a - 1], &tokens[b]))
            .flatten();
        if let Some(fill) = whole {
            out.extend(fill.iter().cloned());
            continue;
        }
        for k in a..b {
            let fill = (tokens[k] == unk && k > 0 && k + 1 < n && tokens[k - 1] != unk && tokens[k + 1] != unk)
                .then(|| fill_between(span, passage, &tokens[k - 1], &tokens[k + 1]))
                .flatten();
            match fill {
                Some(f) => out.extend(f.iter().cloned()),
                None => out.push(tokens[k].clone()),
            }
        }
    }
    out
}

fn settle(tokens: Vec<String>, span: &[String], passage: &[String]) -> Vec<String> {
    let mut cur = tokens;
    for _ in 0..MAX_PASSES {
        let next = repair(&collapse_repeats(&cur), span, passage);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

fn is_blank(tokens: &[String]) -> bool {
    tokens.is_empty() || (tokens.len() == 1 && tokens[0] == Vocabulary::unk_token())
}

/// De-duplication and repair to a fixpoint; an answer left as a bare unknown
/// word (or nothing) becomes the evidence span.
pub fn post_process<S: AsRef<str>>(generated: &[S], span: &[String], passage: &[String]) -> Vec<String> {
    let generated: Vec<String> = generated.iter().map(|t| t.as_ref().to_string()).collect();
    let out = settle(generated, span, passage);
    if !is_blank(&out) || span.is_empty() {
        return out;
    }
    let cleaned = settle(span.to_vec(), span, passage);
    if is_blank(&cleaned) {
        span.to_vec()
    } else {
        cleaned
    }
}
