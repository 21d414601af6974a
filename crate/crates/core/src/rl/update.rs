use serde::{Deserialize, Serialize};

use super::{collect_rollouts, compute_gae, rl_loss_and_grad, RlConfig, RolloutBatch};
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::nnkit::{Mlp, ParamVector, StochasticPolicy};
use crate::seed::{derive_seed, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlStats {
    pub env_steps: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    /// Surrogate loss at the sampling point, before the step.
    pub policy_loss: f64,
    pub grad_norm: f64,
    /// Value loss on the batch after fitting.
    pub value_loss: f64,
}

/// Result of one RL update: its statistics, the batch it used (with advantages computed
/// at the pre-update parameters) and the gradient that was applied.
#[derive(Clone, Debug)]
pub struct RlUpdate {
    pub stats: RlStats,
    pub batch: RolloutBatch,
    pub grad: ParamVector,
}

/// Full-batch value regression on `0.5 (V(s) - R)^2` for `value_epochs` SGD steps.
/// Returns the mean loss before and after.
pub fn fit_value(value: &mut Mlp, batch: &RolloutBatch, cfg: &RlConfig) -> Result<(f64, f64)> {
    if batch.returns.len() != batch.len() {
        return Err(Error::Usage("batch has no return targets; run compute_gae first".into()));
    }
    let n = batch.len() as f64;
    let mut before = None;
    for _ in 0..cfg.value_epochs {
        let mut grad = ParamVector::zeros(value.n_params());
        let mut loss = 0.0;
        for (t, &r) in batch.transitions().zip(&batch.returns) {
            loss += value.accumulate_value_grad(&t.obs, r, 1.0 / n, grad.as_mut_slice())?;
        }
        before.get_or_insert(loss / n);
        value.apply_step(&grad, cfg.value_lr)?;
    }
    let after = value_loss(value, batch)?;
    Ok((before.unwrap_or(after), after))
}

pub fn value_loss(value: &Mlp, batch: &RolloutBatch) -> Result<f64> {
    let mut loss = 0.0;
    for (t, &r) in batch.transitions().zip(&batch.returns) {
        let e = value.value(&t.obs)? - r;
        loss += 0.5 * e * e;
    }
    Ok(loss / batch.len().max(1) as f64)
}

/// collect -> GAE -> one policy SGD step -> `value_epochs` of value fitting.
pub fn rl_update_cycle<P: StochasticPolicy + Sync>(
    policy: &mut P,
    value: &mut Mlp,
    env_cfg: &EnvConfig,
    cfg: &RlConfig,
    seed: u64,
) -> Result<RlUpdate> {
    let mut batch = collect_rollouts(policy, env_cfg, cfg, seed)?;
    compute_gae(&mut batch, value, cfg)?;
    let (policy_loss, grad) = rl_loss_and_grad(policy, &batch, cfg)?;
    let grad_norm = grad.norm();
    if !grad_norm.is_finite() {
        return Err(Error::Numeric("RL gradient is not finite".into()));
    }
    policy.apply_step(&grad, cfg.lr)?;
    let (_, value_loss) = fit_value(value, &batch, cfg)?;
    let stats = RlStats {
        env_steps: batch.len(),
        mean_return: batch.mean_return(),
        success_rate: batch.success_rate(),
        policy_loss,
        grad_norm,
        value_loss,
    };
    Ok(RlUpdate { stats, batch, grad })
}

/// Seed of the `k`-th RL update of a run.
pub fn update_seed(run_seed: u64, k: u64) -> u64 {
    derive_seed(run_seed, stream::RL_UPDATE, k)
}

/// Plain RL loop: `n_updates` calls of [`rl_update_cycle`], update `k` seeded by
/// [`update_seed`].
pub fn train_rl<P: StochasticPolicy + Sync>(
    policy: &mut P,
    value: &mut Mlp,
    env_cfg: &EnvConfig,
    cfg: &RlConfig,
    n_updates: u64,
    seed: u64,
) -> Result<Vec<RlStats>> {
    (0..n_updates)
        .map(|k| rl_update_cycle(policy, value, env_cfg, cfg, update_seed(seed, k)).map(|u| u.stats))
        .collect()
}
