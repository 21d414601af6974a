use rand::Rng;
use rand_distr::StandardNormal;

use super::RlConfig;
use crate::envs::{EnvConfig, Transition};
use crate::error::{Error, Result};
use crate::nnkit::StochasticPolicy;
use crate::seed::{derive_seed, rng_from, stream};

/// Transitions grouped by trajectory, plus per-transition advantage data once
/// [`compute_gae`](super::compute_gae) has run.
///
/// The last trajectory of each worker may be cut off by the step quota; it then ends in a
/// transition with `done == false` and is bootstrapped with the value of its `next_obs`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBatch {
    pub trajectories: Vec<Vec<Transition>>,
    /// Raw GAE advantages in flattened transition order; empty until computed.
    pub advantages: Vec<f64>,
    /// `advantages + values`, the value-regression targets.
    pub returns: Vec<f64>,
    pub values: Vec<f64>,
}

impl RolloutBatch {
    pub fn from_trajectories(trajectories: Vec<Vec<Transition>>) -> Self {
        RolloutBatch {
            trajectories,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.trajectories.iter().flatten()
    }

    pub fn has_advantages(&self) -> bool {
        !self.advantages.is_empty() && self.advantages.len() == self.len()
    }

    /// Advantages as used by the policy loss: standardized when `normalize` is set.
    /// If their std is below 1e-12 they are only centered.
    pub fn policy_advantages(&self, normalize: bool) -> Vec<f64> {
        if !normalize || self.advantages.is_empty() {
            return self.advantages.clone();
        }
        let n = self.advantages.len() as f64;
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < 1e-12 {
            self.advantages.iter().map(|a| a - mean).collect()
        } else {
            self.advantages.iter().map(|a| (a - mean) / std).collect()
        }
    }

    /// Undiscounted returns and success flags of episodes that ended inside the batch.
    /// When none ended, every trajectory counts.
    pub fn episode_outcomes(&self) -> Vec<(f64, bool)> {
        let ended: Vec<&Vec<Transition>> = self
            .trajectories
            .iter()
            .filter(|t| t.last().is_some_and(|x| x.done))
            .collect();
        let pool: Vec<&Vec<Transition>> = if ended.is_empty() {
            self.trajectories.iter().collect()
        } else {
            ended
        };
        pool.iter()
            .map(|t| {
                let ret = t.iter().map(|x| x.reward).sum();
                let success = t.last().is_some_and(|x| x.goal_reached);
                (ret, success)
            })
            .collect()
    }

    pub fn mean_return(&self) -> f64 {
        let o = self.episode_outcomes();
        if o.is_empty() {
            return 0.0;
        }
        o.iter().map(|x| x.0).sum::<f64>() / o.len() as f64
    }

    pub fn success_rate(&self) -> f64 {
        let o = self.episode_outcomes();
        if o.is_empty() {
            return 0.0;
        }
        o.iter().filter(|x| x.1).count() as f64 / o.len() as f64
    }
}

/// Collect exactly `cfg.steps_per_batch` environment steps.
///
/// Worker `w` owns an independent environment and a generator seeded with
/// `derive_seed(seed, ROLLOUT_WORKER, w)`; the first `steps % workers` workers take one
/// extra step. Worker outputs are concatenated in worker order.
pub fn collect_rollouts<P: StochasticPolicy + Sync>(policy: &P, env_cfg: &EnvConfig, cfg: &RlConfig, seed: u64) -> Result<RolloutBatch> {
    cfg.validate()?;
    env_cfg.validate()?;
    if policy.obs_dim() != env_cfg.obs_dim() || policy.act_dim() != env_cfg.act_dim() {
        return Err(Error::Shape(format!(
            "policy maps {}->{} but {} needs {}->{}",
            policy.obs_dim(),
            policy.act_dim(),
            env_cfg.kind,
            env_cfg.obs_dim(),
            env_cfg.act_dim()
        )));
    }
    let w = cfg.workers;
    let quota = |i: usize| cfg.steps_per_batch / w + usize::from(i < cfg.steps_per_batch % w);
    let parts: Vec<Result<Vec<Vec<Transition>>>> = if w == 1 {
        vec![collect_worker(policy, env_cfg, quota(0), derive_seed(seed, stream::ROLLOUT_WORKER, 0))]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..w)
                .map(|i| {
                    let q = quota(i);
                    let ws = derive_seed(seed, stream::ROLLOUT_WORKER, i as u64);
                    s.spawn(move || collect_worker(policy, env_cfg, q, ws))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Env("rollout worker panicked".into()))))
                .collect()
        })
    };
    let mut trajectories = Vec::new();
    for p in parts {
        trajectories.extend(p?);
    }
    Ok(RolloutBatch::from_trajectories(trajectories))
}

fn collect_worker<P: StochasticPolicy>(policy: &P, env_cfg: &EnvConfig, steps: usize, seed: u64) -> Result<Vec<Vec<Transition>>> {
    let mut rng = rng_from(seed);
    let mut env = env_cfg.make()?;
    let mut obs = env.reset_with(&mut rng);
    let mut trajectories = Vec::new();
    let mut current = Vec::new();
    for _ in 0..steps {
        let (mean, std) = policy.mean_std(&obs)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(&std)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let logp = policy.log_prob(&obs, &action)?;
        let mut t = env.step(&action)?;
        t.logp_behavior = logp;
        let done = t.done;
        obs = t.next_obs.clone();
        current.push(t);
        if done {
            trajectories.push(std::mem::take(&mut current));
            obs = env.reset_with(&mut rng);
        }
    }
    if !current.is_empty() {
        trajectories.push(current);
    }
    Ok(trajectories)
}
