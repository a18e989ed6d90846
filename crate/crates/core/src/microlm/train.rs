//! Optimizer and the data-parallel training step.
//!
//! Each sample of a batch builds its own tape over the shared, read-only parameter
//! store; gradients are averaged and applied once, then parameters are rounded to
//! `f32` so checkpoints stay bit-exact.

use std::f64::consts::PI;

use numkit::{grad_check, Bound, GradCheckConfig, GradCheckResult, NumError, ParamStore, Tape, Tensor, Var};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Step size `min_lr + (base_lr − min_lr)·(1 + cos(π·step/total))/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub total_steps: usize,
}

impl CosineSchedule {
    pub fn lr(&self, step: usize) -> f64 {
        if self.total_steps == 0 {
            return self.base_lr;
        }
        let t = (step.min(self.total_steps)) as f64 / self.total_steps as f64;
        self.min_lr + (self.base_lr - self.min_lr) * 0.5 * (1.0 + (PI * t).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        Self::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub schedule: CosineSchedule,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            schedule: CosineSchedule { base_lr: 1e-2, min_lr: 0.0, total_steps: 1000 },
            clip_norm: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub step: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn current_lr(&self) -> f64 {
        self.config.schedule.lr(self.step)
    }

    /// Applies one update with `grads` given in store order.
    pub fn apply(&mut self, params: &mut ParamStore, grads: &mut [Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(invalid("one gradient per parameter is required"));
        }
        if let Some(max) = self.config.clip_norm {
            let norm = grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum::<f64>().sqrt();
            if norm > max {
                let f = max / norm;
                for g in grads.iter_mut() {
                    g.data_mut().iter_mut().for_each(|x| *x *= f);
                }
            }
        }
        let lr = self.current_lr();
        self.step += 1;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for ((_, p, trainable), g) in params.iter_mut().zip(grads.iter()) {
                    if trainable {
                        for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                            *w -= lr * d;
                        }
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
                    self.v = self.m.clone();
                }
                let t = self.step as i32;
                let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                for (i, ((_, p, trainable), g)) in params.iter_mut().zip(grads.iter()).enumerate() {
                    if !trainable {
                        continue;
                    }
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    for (j, (w, d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * d;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * d * d;
                        *w -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                    }
                }
            }
        }
        params.round_to_f32();
        Ok(())
    }
}

/// Per-sample loss graph: `total` is differentiated; the parts are reported.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub lm: f64,
    pub pointer: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepLosses {
    pub lm_loss: f64,
    pub pointer_loss: f64,
}

/// Batch-mean losses and gradients without updating parameters.
pub fn batch_gradients<S, F>(params: &ParamStore, batch: &[S], loss: &F) -> Result<(StepLosses, Vec<Tensor>)>
where
    S: Sync,
    F: for<'a> Fn(&mut Tape<'a>, &Bound, &S) -> Result<LossVars> + Sync,
{
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let per: Vec<(f64, f64, Vec<Tensor>)> = batch
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape)?;
            let lv = loss(&mut tape, &bound, s)?;
            let grads = tape.backward(lv.total)?;
            Ok((lv.lm, lv.pointer, bound.collect(params, &grads)))
        })
        .collect::<Result<_>>()?;
    let n = batch.len() as f64;
    let mut acc: Vec<Tensor> = per[0].2.iter().map(|t| Tensor::zeros(t.shape())).collect();
    let (mut lm, mut ptr) = (0.0, 0.0);
    for (l, p, g) in &per {
        lm += l / n;
        ptr += p / n;
        for (a, b) in acc.iter_mut().zip(g) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y / n;
            }
        }
    }
    Ok((StepLosses { lm_loss: lm, pointer_loss: ptr }, acc))
}

/// One optimizer update over `batch`. A non-finite loss aborts before any update.
pub fn train_step<S, F>(params: &mut ParamStore, opt: &mut Optimizer, batch: &[S], loss: &F) -> Result<StepLosses>
where
    S: Sync,
    F: for<'a> Fn(&mut Tape<'a>, &Bound, &S) -> Result<LossVars> + Sync,
{
    let step = opt.step;
    let (losses, mut grads) = batch_gradients(params, batch, loss).map_err(|e| match e {
        Error::Num(numkit::NumError::NonFinite { .. }) => {
            Error::NonFiniteLoss { step, lm: f64::NAN, pointer: f64::NAN }
        }
        other => other,
    })?;
    if !losses.lm_loss.is_finite() || !losses.pointer_loss.is_finite() {
        return Err(Error::NonFiniteLoss { step, lm: losses.lm_loss, pointer: losses.pointer_loss });
    }
    opt.apply(params, &mut grads)?;
    Ok(losses)
}

/// Finite-difference check of a model-level loss graph.
pub fn grad_check_loss<F>(params: &ParamStore, config: GradCheckConfig, f: F) -> Result<GradCheckResult>
where
    F: for<'a> Fn(&mut Tape<'a>, &Bound) -> Result<Var>,
{
    let wrapped = |tape: &mut Tape<'_>, b: &Bound| {
        f(tape, b).map_err(|e| match e {
            Error::Num(n) => n,
            other => NumError::Invalid { op: "loss", msg: other.to_string() },
        })
    };
    Ok(grad_check(params, config, wrapped)?)
}
