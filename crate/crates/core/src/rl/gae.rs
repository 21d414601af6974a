use super::{RlConfig, RolloutBatch};
use crate::error::Result;
use crate::nnkit::Mlp;

/// Fill `advantages`, `values` and `returns` with GAE(gamma, lambda).
///
/// `delta_t = r_t + gamma * V(s'_t) - V(s_t)`, with `V(s'_t) = 0` only when the goal was
/// reached. Horizon cut-offs and batch-quota cut-offs bootstrap with `V(next_obs)`. The
/// recursion `A_t = delta_t + gamma * lambda * A_{t+1}` restarts at every trajectory end.
pub fn compute_gae(batch: &mut RolloutBatch, value: &Mlp, cfg: &RlConfig) -> Result<()> {
    let n = batch.len();
    let mut advantages = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for traj in &batch.trajectories {
        let v: Vec<f64> = traj.iter().map(|t| value.value(&t.obs)).collect::<Result<_>>()?;
        let last = traj.last().expect("trajectories are nonempty");
        let tail_value = if last.goal_reached { 0.0 } else { value.value(&last.next_obs)? };
        let mut adv = vec![0.0; traj.len()];
        let mut running = 0.0;
        for i in (0..traj.len()).rev() {
            let next_v = if i + 1 < traj.len() { v[i + 1] } else { tail_value };
            let delta = traj[i].reward + cfg.gamma * next_v - v[i];
            running = delta + cfg.gamma * cfg.gae_lambda * running;
            adv[i] = running;
        }
        advantages.extend(adv);
        values.extend(v);
    }
    batch.returns = advantages.iter().zip(&values).map(|(a, v)| a + v).collect();
    batch.advantages = advantages;
    batch.values = values;
    Ok(())
}
