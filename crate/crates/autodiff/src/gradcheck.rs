//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates the forward pass, so it is independent
//! of every backward rule it checks.

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Maximum allowed `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub rtol: f64,
    /// Magnitude below which errors are measured absolutely (scaled by `rtol`).
    pub floor: f64,
}

impl GradCheckConfig {
    pub fn elementwise() -> Self {
        Self {
            step: 1e-3,
            rtol: 1e-4,
            floor: 1e-3,
        }
    }

    pub fn composite() -> Self {
        Self {
            step: 1e-3,
            rtol: 1e-3,
            floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_error: f64,
    pub worst: Option<Mismatch>,
    pub failures: Vec<Mismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

fn scaled_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Checks every trainable scalar in `params`. `loss` builds the scalar loss on
/// a fresh tape each time it is called.
pub fn check_params<F, E>(params: &ParamStore<f64>, cfg: GradCheckConfig, loss: F) -> std::result::Result<GradCheckReport, E>
where
    F: for<'a> Fn(&mut Tape<'a, f64>) -> std::result::Result<Var, E>,
    E: From<Error>,
{
    let analytic = {
        let mut tape = Tape::with_params(params);
        let l = loss(&mut tape)?;
        tape.backward(l)?.into_param_grads()
    };
    let eval = |store: &ParamStore<f64>| -> std::result::Result<f64, E> {
        let mut tape = Tape::with_params(store);
        let l = loss(&mut tape)?;
        Ok(tape.value(l).item())
    };
    let mut report = GradCheckReport::default();
    let mut work = params.clone();
    for id in params.ids().filter(|&id| params.is_trainable(id)) {
        let grad = analytic
            .iter()
            .find(|(p, _)| *p == id)
            .map(|(_, g)| g.clone())
            .unwrap_or_else(|| Tensor::zeros(params.get(id).shape()));
        for i in 0..params.get(id).numel() {
            let numeric = central_difference(&mut work, id, i, cfg.step, &eval)?;
            let a = grad.data()[i];
            record(&mut report, params.name(id), i, a, numeric, cfg);
        }
    }
    Ok(report)
}

fn central_difference<E>(
    work: &mut ParamStore<f64>,
    id: ParamId,
    i: usize,
    step: f64,
    eval: &impl Fn(&ParamStore<f64>) -> std::result::Result<f64, E>,
) -> std::result::Result<f64, E> {
    let orig = work.get(id).data()[i];
    work.get_mut(id).data_mut()[i] = orig + step;
    let plus = eval(work)?;
    work.get_mut(id).data_mut()[i] = orig - step;
    let minus = eval(work)?;
    work.get_mut(id).data_mut()[i] = orig;
    Ok((plus - minus) / (2.0 * step))
}

fn record(report: &mut GradCheckReport, name: &str, index: usize, a: f64, n: f64, cfg: GradCheckConfig) {
    let error = scaled_error(a, n, cfg.floor);
    report.checked += 1;
    let m = Mismatch {
        param: name.to_string(),
        index,
        analytic: a,
        numeric: n,
        error,
    };
    if error > report.max_error || report.worst.is_none() {
        report.max_error = report.max_error.max(error);
        report.worst = Some(m.clone());
    }
    if error > cfg.rtol {
        report.failures.push(m);
    }
}

/// Checks the gradient with respect to free input tensors. `build` receives
/// the taped inputs and returns the scalar loss.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], cfg: GradCheckConfig, build: F) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&mut Tape<'a, f64>, &[Var]) -> Result<Var>,
{
    let run = |values: &[Tensor<f64>], want_grad: bool| -> Result<(f64, Vec<Tensor<f64>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.var(t.clone())).collect();
        let l = build(&mut tape, &vars)?;
        let value = tape.value(l).item();
        if !want_grad {
            return Ok((value, vec![]));
        }
        let grads = tape.backward(l)?;
        let g = vars
            .iter()
            .zip(values)
            .map(|(v, t)| grads.wrt(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        Ok((value, g))
    };
    let (_, analytic) = run(inputs, true)?;
    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + cfg.step;
            let (plus, _) = run(&work, false)?;
            work[k].data_mut()[i] = orig - cfg.step;
            let (minus, _) = run(&work, false)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            record(&mut report, &format!("input{k}"), i, analytic[k].data()[i], numeric, cfg);
        }
    }
    Ok(report)
}
