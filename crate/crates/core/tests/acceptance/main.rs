//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p snet-core --test acceptance -- 4 6` runs a subset.

mod determinism;
mod extraction;
mod gradients;
mod oracles;
mod properties;
mod synthesis;

use std::time::{Duration, Instant};

/// Outcome of one criterion.
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: &[Criterion] = &[
    (1, "gradient suite", gradients::suite),
    (2, "oracle equivalence", oracles::equivalence),
    (3, "metric fixtures", oracles::fixtures),
    (4, "extraction overfit", extraction::overfit),
    (5, "joint ranking beats span-mass ranking", extraction::ranking_benefit),
    (6, "synthesis copy task", synthesis::copy_task),
    (6, "synthesis yes/no", synthesis::yes_no),
    (7, "pipeline determinism", determinism::byte_identical),
    (8, "beam properties", properties::beam),
    (9, "post-processing suite", properties::post_processing),
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for &(n, name, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let v = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::new(false, format!("panicked: {msg}"))
        });
        let status = if v.passed { "PASS" } else { "FAIL" };
        println!("criterion {n} [{status}] {name}: {} ({})", v.detail, secs(start.elapsed()));
        if !v.passed {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}
