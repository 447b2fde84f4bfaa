//! Adam with bias correction and a reduce-on-plateau learning-rate
//! schedule.

use alloc::collections::BTreeMap;
use alloc::string::String;

use crate::error::Result;
use crate::math;
use crate::net::{GradStore, LapNet};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update on a flat parameter slice. `t` is the
/// 1-based step count.
#[allow(clippy::too_many_arguments)]
pub fn adam_step_slice(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - math::powi(cfg.beta1, t as i32);
    let bc2 = 1.0 - math::powi(cfg.beta2, t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        param[i] -= cfg.lr * mhat / (math::sqrt(vhat) + cfg.epsilon);
    }
}

/// Adam state for a whole network, moments keyed by parameter name.
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// Applies one step to every trainable parameter that has a gradient.
    /// Parameters without an entry in `grads` are untouched (their moments
    /// stay at zero), so a zero-gradient step is an exact no-op.
    pub fn step(&mut self, net: &mut LapNet, grads: &GradStore) -> Result<()> {
        self.t += 1;
        let t = self.t;
        let cfg = self.cfg;
        let (m, v) = (&mut self.m, &mut self.v);
        net.visit_mut(&mut |name, tensor, kind| {
            if !kind.trainable() {
                return;
            }
            let Some(g) = grads.get(name) else {
                return;
            };
            let m_entry = m
                .entry(String::from(name))
                .or_insert_with(|| Tensor::zeros(tensor.shape()));
            let v_entry = v
                .entry(String::from(name))
                .or_insert_with(|| Tensor::zeros(tensor.shape()));
            adam_step_slice(
                tensor.data_mut(),
                g.data(),
                m_entry.data_mut(),
                v_entry.data_mut(),
                t,
                &cfg,
            );
        });
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    /// Relative improvement required to reset the counter.
    pub min_delta_rel: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            factor: 0.2,
            patience: 5,
            min_delta_rel: 1e-6,
        }
    }
}

/// Cuts the learning rate by `factor` after `patience` consecutive epochs
/// without improvement of the monitored validation loss. The rate after k
/// reductions is exactly `lr0 * factor^k`.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    pub cfg: PlateauConfig,
    lr0: f64,
    reductions: u32,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr0: f64, cfg: PlateauConfig) -> Self {
        PlateauScheduler {
            cfg,
            lr0,
            reductions: 0,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr0 * math::powi(self.cfg.factor, self.reductions as i32)
    }

    pub fn reductions(&self) -> u32 {
        self.reductions
    }

    /// Feeds one validation loss; returns the learning rate to use next.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        let improved = match self.best {
            None => true,
            Some(best) => val_loss < best - math::abs(best) * self.cfg.min_delta_rel,
        };
        if improved {
            self.best = Some(val_loss);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.cfg.patience {
                self.reductions += 1;
                self.bad_epochs = 0;
            }
        }
        self.lr()
    }
}
