//! Momentum SGD with optional cosine learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::supernet::Parameter;

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    Cosine,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub schedule: Schedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 32,
            schedule: Schedule::Cosine,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, train_size: usize) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(
                "weight_decay must be non-negative".into(),
            ));
        }
        if self.batch_size == 0 || self.batch_size > train_size {
            return Err(Error::InvalidConfig(alloc::format!(
                "batch_size must be in 1..={train_size}"
            )));
        }
        Ok(())
    }

    /// Learning rate at training progress `t ∈ [0, 1]`.
    pub fn lr_at(&self, t: f64) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Cosine => {
                self.learning_rate * (1.0 + math::cos(core::f64::consts::PI * t)) / 2.0
            }
        }
    }
}

/// One momentum step on every parameter yielded by `params`:
/// `v ← m·v + g + wd·w`, `w ← w − lr(t)·v`.
pub fn sgd_step<'a, I>(params: I, cfg: &OptimizerConfig, epoch_fraction: f64)
where
    I: IntoIterator<Item = &'a mut Parameter>,
{
    let lr = cfg.lr_at(epoch_fraction);
    for p in params {
        let Parameter {
            value,
            grad,
            momentum,
            ..
        } = p;
        for ((w, g), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(momentum.data_mut().iter_mut())
        {
            *v = cfg.momentum * *v + g + cfg.weight_decay * *w;
            *w -= lr * *v;
        }
    }
}
