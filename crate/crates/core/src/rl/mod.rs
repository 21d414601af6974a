//! On-policy RL gradient: rollouts, GAE, the clipped surrogate and value fitting.

pub mod eval;
pub mod gae;
pub mod loss;
pub mod rollout;
pub mod update;

use serde::{Deserialize, Serialize};

pub use eval::{evaluate, EvalStats};
pub use gae::compute_gae;
pub use loss::rl_loss_and_grad;
pub use rollout::{collect_rollouts, RolloutBatch};
pub use update::{fit_value, rl_update_cycle, train_rl, RlStats, RlUpdate};

use crate::envs::EnvKind;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    /// Policy step size, the RL learning rate.
    pub lr: f64,
    pub steps_per_batch: usize,
    pub value_lr: f64,
    pub value_epochs: usize,
    /// Rescales advantages to zero mean and unit std before the policy gradient. This
    /// changes the magnitude of the RL gradient and therefore of the logged norms.
    pub normalize_advantages: bool,
    /// Parallel rollout workers; results are merged in worker order.
    pub workers: usize,
}

impl RlConfig {
    pub fn for_env(kind: EnvKind) -> Self {
        RlConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            lr: 1e-2,
            steps_per_batch: match kind {
                EnvKind::Gridworld => 2048,
                EnvKind::Pointmass => 1024,
            },
            value_lr: 1e-2,
            value_epochs: 20,
            normalize_advantages: true,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda)));
        }
        if !(self.clip_eps > 0.0) {
            return Err(Error::Config("clip_eps must be positive".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() || !(self.value_lr >= 0.0) || !self.value_lr.is_finite() {
            return Err(Error::Config("learning rates must be finite and nonnegative".into()));
        }
        if self.steps_per_batch == 0 {
            return Err(Error::Config("steps_per_batch must be positive".into()));
        }
        if self.workers == 0 || self.workers > self.steps_per_batch {
            return Err(Error::Config("workers must lie in 1..=steps_per_batch".into()));
        }
        Ok(())
    }
}
