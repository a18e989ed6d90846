//! Central finite-difference check of tape gradients.

use std::collections::BTreeMap;

use crate::error::{NumError, Result};
use crate::params::{Bound, ParamStore};
use crate::tape::{Tape, Var};

#[derive(Clone, Debug)]
pub struct GradCheckResult {
    pub max_relative_error: f64,
    pub per_parameter_errors: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Probe at most this many evenly spread elements per parameter.
    pub max_elements: Option<usize>,
    /// Denominator floor for the relative error.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-4, max_elements: None, floor: 1e-6 }
    }
}

/// Relative error between an analytic and a numeric gradient for one parameter:
/// `max|a - n| / max(max|a|, max|n|, floor)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(floor, f64::max);
    diff / scale
}

fn eval<F>(params: &ParamStore, f: &F) -> Result<f64>
where
    F: for<'a> Fn(&mut Tape<'a>, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape)?;
    let out = f(&mut tape, &bound)?;
    let v = tape.value(out).item();
    if !v.is_finite() {
        return Err(NumError::NonFinite { op: "grad_check" });
    }
    Ok(v)
}

/// Compares tape gradients of the scalar `f` with central differences at `config.step`.
/// Frozen parameters are reported with zero error.
pub fn grad_check<F>(params: &ParamStore, config: GradCheckConfig, f: F) -> Result<GradCheckResult>
where
    F: for<'a> Fn(&mut Tape<'a>, &Bound) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape)?;
        let out = f(&mut tape, &bound)?;
        if !tape.value(out).item().is_finite() {
            return Err(NumError::NonFinite { op: "grad_check" });
        }
        let grads = tape.backward(out)?;
        bound.collect(params, &grads)
    };

    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut per_parameter_errors = BTreeMap::new();
    let mut probe = params.clone();
    for (name, grad) in names.iter().zip(&analytic) {
        if !params.is_trainable(name) {
            per_parameter_errors.insert(name.clone(), 0.0);
            continue;
        }
        let n = grad.len();
        let picks: Vec<usize> = match config.max_elements {
            Some(m) if m < n => (0..m).map(|i| i * n / m).collect(),
            _ => (0..n).collect(),
        };
        let mut a = Vec::with_capacity(picks.len());
        let mut num = Vec::with_capacity(picks.len());
        for &i in &picks {
            let orig = params.get(name)?.data()[i];
            probe.get_mut(name)?.data_mut()[i] = orig + config.step;
            let up = eval(&probe, &f)?;
            probe.get_mut(name)?.data_mut()[i] = orig - config.step;
            let down = eval(&probe, &f)?;
            probe.get_mut(name)?.data_mut()[i] = orig;
            a.push(grad.data()[i]);
            num.push((up - down) / (2.0 * config.step));
        }
        per_parameter_errors.insert(name.clone(), relative_error(&a, &num, config.floor));
    }
    let max_relative_error = per_parameter_errors.values().copied().fold(0.0, f64::max);
    Ok(GradCheckResult { max_relative_error, per_parameter_errors })
}
