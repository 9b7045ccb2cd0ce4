//! Adam with bias correction.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::graph::{ParamId, ParamStore};
use super::scalar::Scalar;
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            bail!(InvalidArgument, "learning rate must be finite and non-negative, got {}", self.lr);
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            bail!(InvalidArgument, "Adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            bail!(InvalidArgument, "Adam epsilon must be positive");
        }
        Ok(())
    }
}

/// Optimizer state over a fixed set of parameters.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    cfg: AdamConfig,
    t: u64,
    ids: Vec<ParamId>,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig, ids: &[ParamId], store: &ParamStore<T>) -> Result<Self> {
        cfg.validate()?;
        let zeros = |id: &ParamId| alloc::vec![T::zero(); store.value(*id).len()];
        Ok(Self {
            cfg,
            t: 0,
            ids: ids.to_vec(),
            m: ids.iter().map(zeros).collect(),
            v: ids.iter().map(zeros).collect(),
        })
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn param_ids(&self) -> &[ParamId] {
        &self.ids
    }

    /// First and second moment buffers of the `i`-th managed parameter.
    pub fn moments(&self, i: usize) -> (&[T], &[T]) {
        (&self.m[i], &self.v[i])
    }

    /// One update from the gradients currently held in `store`.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (ob1, ob2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let (ibc1, ibc2) = (T::from_f64(1.0 / bc1), T::from_f64(1.0 / bc2));
        let (lr, eps) = (T::from_f64(c.lr), T::from_f64(c.eps));
        for (k, &id) in self.ids.iter().enumerate() {
            let (value, grad) = store.value_grad_mut(id);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((p, &g), mi), vi) in
                value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut())
            {
                *mi = b1 * *mi + ob1 * g;
                *vi = b2 * *vi + ob2 * g * g;
                let mhat = *mi * ibc1;
                let vhat = *vi * ibc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
