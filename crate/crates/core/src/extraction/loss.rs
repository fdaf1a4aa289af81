use snet_autodiff::{Real, Tape, Var};

use crate::error::{Error, Result};

/// Probabilities below this are clamped inside logarithms.
pub const LOG_FLOOR: f64 = 1e-7;

/// −[log a_g + Σ_{i≠g} log(1 − a_i)] for one distribution with gold index g.
fn binary_ce<T: Real>(tape: &mut Tape<T>, probs: Var, gold: usize) -> Result<Var> {
    let floor = T::lit(LOG_FLOOR);
    let log_p = tape.log_floor(probs, floor);
    let q = tape.one_minus(probs);
    let log_q = tape.log_floor(q, floor);
    let hit = tape.pick(log_p, gold)?;
    let miss_all = tape.sum(log_q);
    let miss_gold = tape.pick(log_q, gold)?;
    let miss = tape.sub(miss_all, miss_gold)?;
    let total = tape.add(hit, miss)?;
    Ok(tape.scale(total, T::lit(-1.0)))
}

fn categorical_ce<T: Real>(tape: &mut Tape<T>, probs: Var, gold: usize) -> Result<Var> {
    let log_p = tape.log_floor(probs, T::lit(LOG_FLOOR));
    let hit = tape.pick(log_p, gold)?;
    Ok(tape.scale(hit, T::lit(-1.0)))
}

fn check_index(what: &str, index: usize, size: usize) -> Result<()> {
    if index >= size {
        return Err(Error::Data(format!("{what} {index} outside 0..{size}")));
    }
    Ok(())
}

/// Span loss summed over the start and end steps. Binary cross-entropy over
/// every position by default; `categorical` keeps only the gold terms.
pub fn extraction_loss<T: Real>(
    tape: &mut Tape<T>,
    start: Var,
    end: Var,
    gold: (usize, usize),
    categorical: bool,
) -> Result<Var> {
    let n = tape.value(start).numel();
    check_index("gold start", gold.0, n)?;
    check_index("gold end", gold.1, n)?;
    let ce = if categorical { categorical_ce::<T> } else { binary_ce::<T> };
    let a = ce(tape, start, gold.0)?;
    let b = ce(tape, end, gold.1)?;
    Ok(tape.add(a, b)?)
}

/// Binary cross-entropy of the normalized passage scores against the
/// correct passage.
pub fn ranking_loss<T: Real>(tape: &mut Tape<T>, probs: Var, correct: usize) -> Result<Var> {
    check_index("correct passage", correct, tape.value(probs).numel())?;
    binary_ce(tape, probs, correct)
}

pub fn check_weight(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Config(format!("loss weight r = {r} outside [0, 1]")));
    }
    Ok(())
}

/// r·L_AP + (1 − r)·L_PR.
pub fn joint_loss<T: Real>(tape: &mut Tape<T>, span: Var, rank: Var, r: f64) -> Result<Var> {
    check_weight(r)?;
    let a = tape.scale(span, T::lit(r));
    let b = tape.scale(rank, T::lit(1.0 - r));
    Ok(tape.add(a, b)?)
}
