use super::{RlConfig, RolloutBatch};
use crate::error::{Error, Result};
use crate::nnkit::{ParamVector, StochasticPolicy};

/// Clipped surrogate `-mean(min(r A, clip(r, 1-eps, 1+eps) A))` with `r = pi / pi_old`,
/// and its gradient over the policy's trainable parameters.
///
/// Where the clipped term is the strict minimum the sample contributes no gradient. At
/// the sampling point every ratio is 1 and the gradient is the plain policy gradient
/// `-mean(A grad log pi)`.
pub fn rl_loss_and_grad<P: StochasticPolicy>(policy: &P, batch: &RolloutBatch, cfg: &RlConfig) -> Result<(f64, ParamVector)> {
    if !batch.has_advantages() {
        return Err(Error::Usage("rollout batch has no advantages; run compute_gae first".into()));
    }
    let adv = batch.policy_advantages(cfg.normalize_advantages);
    let n = adv.len() as f64;
    let mut grad = ParamVector::zeros(policy.n_trainable());
    let mut total = 0.0;
    let (lo, hi) = (1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    for (i, (t, &a)) in batch.transitions().zip(&adv).enumerate() {
        let logp = policy.log_prob(&t.obs, &t.action)?;
        let ratio = (logp - t.logp_behavior).exp();
        if !ratio.is_finite() {
            return Err(Error::Numeric(format!(
                "importance ratio not finite at transition {i}: logp {logp}, behavior logp {}",
                t.logp_behavior
            )));
        }
        let unclipped = ratio * a;
        let clipped = ratio.clamp(lo, hi) * a;
        if unclipped <= clipped {
            total += unclipped;
            if a != 0.0 {
                // d(r A)/d theta = A r grad log pi
                policy.accumulate_log_prob_grad(&t.obs, &t.action, -a * ratio / n, grad.as_mut_slice())?;
            }
        } else {
            total += clipped;
        }
    }
    Ok((-total / n, grad))
}
