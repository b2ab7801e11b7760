//! SGD with momentum, AdamW, and the cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Classic momentum SGD; weight decay is coupled (added to the gradient).
    SgdMomentum { momentum: f64 },
    /// Adam with decoupled weight decay.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn sgd(momentum: f64) -> Self {
        OptimizerKind::SgdMomentum { momentum }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub kind: OptimizerKind,
    pub base_lr: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, base_lr: f64, weight_decay: f64, params: &ParamStore<T>) -> Self {
        let zeros = |p: &super::Parameter<T>| vec![T::zero(); p.tensor.numel()];
        let first = params.iter().map(zeros).collect();
        let second = match kind {
            OptimizerKind::Adam { .. } => params.iter().map(zeros).collect(),
            OptimizerKind::SgdMomentum { .. } => Vec::new(),
        };
        OptimizerState {
            kind,
            base_lr,
            weight_decay,
            step: 0,
            first,
            second,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update with learning rate `lr` using the gradients held
    /// by `params`. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore<T>, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid("optimizer", format!("learning rate must be > 0, got {lr}")));
        }
        if self.first.len() != params.len() {
            return Err(Error::shape("optimizer", "parameter count", self.first.len(), params.len()));
        }
        for p in params.iter() {
            if let Some(g) = p.tensor.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of {}; step rejected", p.name)));
                }
            }
        }
        self.step += 1;
        for (i, p) in params.iter_mut().enumerate() {
            let wd = if p.weight_decay_exempt { 0.0 } else { self.weight_decay };
            let Some(grad) = p.tensor.grad().map(<[T]>::to_vec) else { continue };
            match self.kind {
                OptimizerKind::SgdMomentum { momentum } => {
                    sgd_step(p.tensor.data_mut(), &grad, &mut self.first[i], lr, momentum, wd)
                }
                OptimizerKind::Adam { beta1, beta2, eps } => adam_step(
                    p.tensor.data_mut(),
                    &grad,
                    (&mut self.first[i], &mut self.second[i]),
                    self.step,
                    lr,
                    (beta1, beta2, eps),
                    wd,
                ),
            }
        }
        Ok(())
    }
}

/// `v <- mu v + (g + wd p); p <- p - lr v`.
pub fn sgd_step<T: Scalar>(param: &mut [T], grad: &[T], velocity: &mut [T], lr: f64, momentum: f64, wd: f64) {
    let (lr, mu, wd) = (T::of(lr), T::of(momentum), T::of(wd));
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        let d = g + wd * *p;
        *v = mu * *v + d;
        *p -= lr * *v;
    }
}

/// AdamW update for step number `t` (1-based).
pub fn adam_step<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    (m, v): (&mut [T], &mut [T]),
    t: u64,
    lr: f64,
    (beta1, beta2, eps): (f64, f64, f64),
    wd: f64,
) {
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    let (b1, b2) = (T::of(beta1), T::of(beta2));
    for i in 0..param.len() {
        let g = grad[i];
        param[i] -= T::of(lr * wd) * param[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let mh = m[i] / T::of(c1);
        let vh = v[i] / T::of(c2);
        param[i] -= T::of(lr) * mh / (vh.sqrt() + T::of(eps));
    }
}

/// `base_lr * (1 + cos(pi * epoch / total)) / 2`.
pub fn cosine_lr(epoch: usize, total: usize, base_lr: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("cosine_lr", "total epochs must be > 0"));
    }
    if epoch > total {
        return Err(Error::invalid("cosine_lr", format!("epoch {epoch} beyond total {total}")));
    }
    if epoch == total {
        return Ok(0.0);
    }
    Ok(base_lr * (1.0 + (std::f64::consts::PI * epoch as f64 / total as f64).cos()) / 2.0)
}
