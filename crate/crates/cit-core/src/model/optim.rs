//! AdamW with decoupled, per-group weight decay and a warmup + cosine
//! learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::{DecayGroup, TrainableParams};
use crate::error::{config_err, Result};

/// Optimizer and learning-rate schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_fraction: f64,
    /// Length of the schedule in optimizer steps; the driver sets this to the budget.
    pub total_steps: u64,
    pub weight_decay_proj: f64,
    pub weight_decay_other: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            base_lr: 5e-4,
            min_lr: 1e-5,
            warmup_fraction: 0.04,
            total_steps: 5000,
            weight_decay_proj: 1.0,
            weight_decay_other: 0.2,
            betas: (0.9, 0.999),
            eps: 1e-8,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(config_err("warmup_fraction must lie in [0, 1)"));
        }
        if !(self.min_lr >= 0.0 && self.min_lr <= self.base_lr && self.base_lr.is_finite()) {
            return Err(config_err(
                "learning rates must satisfy 0 <= min_lr <= base_lr",
            ));
        }
        if self.total_steps == 0 {
            return Err(config_err("total_steps must be >= 1"));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) || self.eps <= 0.0 {
            return Err(config_err(
                "betas must lie in [0, 1) and eps must be positive",
            ));
        }
        if self.weight_decay_proj < 0.0 || self.weight_decay_other < 0.0 {
            return Err(config_err("weight decay must be nonnegative"));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> u64 {
        libm::round(self.warmup_fraction * self.total_steps as f64) as u64
    }

    /// Learning rate for the `step`-th update (1-based).
    ///
    /// Rises linearly to `base_lr` at the end of warmup, then follows a half
    /// cosine down to `min_lr` at `total_steps`; held at `min_lr` afterwards.
    pub fn lr_at(&self, step: u64) -> f64 {
        let warmup = self.warmup_steps();
        if step <= warmup && warmup > 0 {
            return self.base_lr * step as f64 / warmup as f64;
        }
        if step >= self.total_steps {
            return self.min_lr;
        }
        let progress = (step - warmup) as f64 / (self.total_steps - warmup) as f64;
        self.min_lr
            + 0.5
                * (self.base_lr - self.min_lr)
                * (1.0 + libm::cos(core::f64::consts::PI * progress))
    }

    fn decay_for(&self, group: DecayGroup) -> f64 {
        match group {
            DecayGroup::Projection => self.weight_decay_proj,
            DecayGroup::Other => self.weight_decay_other,
            DecayGroup::None => 0.0,
        }
    }
}

/// Adam moment accumulators, shaped like the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    first: TrainableParams,
    second: TrainableParams,
    step: u64,
}

impl OptimState {
    pub fn new(like: &TrainableParams) -> Self {
        Self {
            first: like.zeros_like(),
            second: like.zeros_like(),
            step: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Applies one AdamW update and returns the learning rate used.
    pub fn apply(
        &mut self,
        params: &mut TrainableParams,
        grads: &TrainableParams,
        schedule: &ScheduleConfig,
    ) -> f64 {
        self.step += 1;
        let lr = schedule.lr_at(self.step);
        let (b1, b2) = schedule.betas;
        let bc1 = 1.0 - libm::pow(b1, self.step as f64);
        let bc2 = 1.0 - libm::pow(b2, self.step as f64);

        let p = params.tensors_mut();
        let g = grads.tensors();
        let m = self.first.tensors_mut();
        let v = self.second.tensors_mut();
        for (((p, g), m), v) in p.into_iter().zip(g).zip(m).zip(v) {
            let wd = schedule.decay_for(p.group);
            for i in 0..p.data.len() {
                if wd != 0.0 {
                    p.data[i] -= lr * wd * p.data[i];
                }
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= lr * mhat / (libm::sqrt(vhat) + schedule.eps);
            }
        }
        params.clamp_log_tau();
        lr
    }
}
