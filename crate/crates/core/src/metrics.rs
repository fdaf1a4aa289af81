//! ROUGE-L, BLEU-1, precision@1 and upper-bound bucketing.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

pub const ROUGE_BETA: f64 = 1.2;

pub fn lcs_length<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// F-measure from an LCS length and the two sequence lengths.
///
/// With P = l/n and R = l/m this is (1+β²)PR/(R+β²P), rewritten as
/// (1+β²)l/(n+β²m) so every caller gets bit-identical values.
pub fn rouge_from_lcs(lcs: usize, hyp_len: usize, ref_len: usize) -> f64 {
    if lcs == 0 || hyp_len == 0 || ref_len == 0 {
        return 0.0;
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * lcs as f64 / (hyp_len as f64 + b2 * ref_len as f64)
}

/// ROUGE-L of `hyp`, maximised over `refs`.
pub fn rouge_l<S: PartialEq>(hyp: &[S], refs: &[Vec<S>]) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::Usage("rouge_l needs at least one reference".into()));
    }
    Ok(refs
        .iter()
        .map(|r| rouge_from_lcs(lcs_length(hyp, r), hyp.len(), r.len()))
        .fold(0.0, f64::max))
}

fn counts<S: AsRef<str>>(tokens: &[S]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_ref()).or_insert(0) += 1;
    }
    m
}

/// Corpus BLEU-1: clipped unigram precision over all pairs times the brevity
/// penalty from the summed closest reference lengths.
pub fn bleu_1_corpus<S: AsRef<str>>(pairs: &[(Vec<S>, Vec<Vec<S>>)]) -> f64 {
    let mut matched = 0usize;
    let mut hyp_total = 0usize;
    let mut ref_total = 0usize;
    for (hyp, refs) in pairs {
        hyp_total += hyp.len();
        if refs.is_empty() {
            continue;
        }
        let mut max_ref: HashMap<&str, usize> = HashMap::new();
        for r in refs {
            for (tok, c) in counts(r) {
                let e = max_ref.entry(tok).or_insert(0);
                *e = (*e).max(c);
            }
        }
        matched += counts(hyp)
            .into_iter()
            .map(|(tok, c)| c.min(max_ref.get(tok).copied().unwrap_or(0)))
            .sum::<usize>();
        // closest length, shorter wins ties
        ref_total += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(hyp.len()), l))
            .unwrap_or(0);
    }
    if hyp_total == 0 || matched == 0 {
        return 0.0;
    }
    let precision = matched as f64 / hyp_total as f64;
    let bp = if hyp_total > ref_total {
        1.0
    } else {
        (1.0 - ref_total as f64 / hyp_total as f64).exp()
    };
    precision * bp
}

/// Fraction of questions whose highest-scored passage is the correct one.
pub fn precision_at_1<T: PartialOrd + Copy>(rankings: &[(Vec<T>, usize)]) -> f64 {
    if rankings.is_empty() {
        return 0.0;
    }
    let hits = rankings
        .iter()
        .filter(|(scores, correct)| {
            let mut best = 0;
            for (i, s) in scores.iter().enumerate() {
                if *s > scores[best] {
                    best = i;
                }
            }
            best == *correct
        })
        .count();
    hits as f64 / rankings.len() as f64
}

pub const BUCKET_LABELS: [&str; 6] = [
    "max = 1.0",
    "[0.8, 1.0)",
    "[0.6, 0.8)",
    "[0.4, 0.6)",
    "[0.2, 0.4)",
    "< 0.2",
];

pub fn bucket_index(oracle: f64) -> usize {
    if oracle >= 1.0 {
        0
    } else if oracle >= 0.8 {
        1
    } else if oracle >= 0.6 {
        2
    } else if oracle >= 0.4 {
        3
    } else if oracle >= 0.2 {
        4
    } else {
        5
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BucketRow {
    pub label: String,
    pub count: usize,
    pub fraction: f64,
    pub mean_rouge: f64,
}

/// Groups examples by their best achievable span ROUGE-L and reports how the
/// evaluated score behaves in each group. `scores` holds (oracle, evaluated).
pub fn bucket_by_upper_bound(scores: &[(f64, f64)]) -> Vec<BucketRow> {
    let mut count = [0usize; 6];
    let mut total = [0.0f64; 6];
    for &(oracle, eval) in scores {
        let b = bucket_index(oracle);
        count[b] += 1;
        total[b] += eval;
    }
    let n = scores.len();
    BUCKET_LABELS
        .iter()
        .enumerate()
        .map(|(i, label)| BucketRow {
            label: label.to_string(),
            count: count[i],
            fraction: if n == 0 { 0.0 } else { count[i] as f64 / n as f64 },
            mean_rouge: if count[i] == 0 { 0.0 } else { total[i] / count[i] as f64 },
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub rouge_l: f64,
    pub bleu_1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_at_1: Option<f64>,
    pub per_question: Vec<(u64, f64)>,
    pub bucket_table: Vec<BucketRow>,
}

/// One system answer to be scored.
#[derive(Clone, Debug)]
pub struct Scored {
    pub query_id: u64,
    pub hypothesis: Vec<String>,
    pub references: Vec<Vec<String>>,
    /// Best span ROUGE-L for the question, used for bucketing.
    pub oracle: f64,
}

impl EvalReport {
    pub fn compute(items: &[Scored], rankings: Option<&[(Vec<f32>, usize)]>) -> Result<Self> {
        let mut per_question = Vec::with_capacity(items.len());
        let mut buckets = Vec::with_capacity(items.len());
        for it in items {
            let r = rouge_l(&it.hypothesis, &it.references)?;
            per_question.push((it.query_id, r));
            buckets.push((it.oracle, r));
        }
        let rouge = if items.is_empty() {
            0.0
        } else {
            per_question.iter().map(|(_, r)| r).sum::<f64>() / items.len() as f64
        };
        let pairs: Vec<_> = items
            .iter()
            .map(|it| (it.hypothesis.clone(), it.references.clone()))
            .collect();
        Ok(Self {
            rouge_l: rouge,
            bleu_1: bleu_1_corpus(&pairs),
            precision_at_1: rankings.map(precision_at_1),
            per_question,
            bucket_table: bucket_by_upper_bound(&buckets),
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ROUGE-L  {:>8.4}", self.rouge_l);
        let _ = writeln!(s, "BLEU-1   {:>8.4}", self.bleu_1);
        if let Some(p) = self.precision_at_1 {
            let _ = writeln!(s, "P@1      {:>8.4}", p);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<12} {:>6} {:>9} {:>9}", "bucket", "count", "fraction", "ROUGE-L");
        for row in &self.bucket_table {
            let _ = writeln!(
                s,
                "{:<12} {:>6} {:>9.4} {:>9.4}",
                row.label, row.count, row.fraction, row.mean_rouge
            );
        }
        s
    }
}
