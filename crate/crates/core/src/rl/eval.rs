use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::EnvConfig;
use crate::error::Result;
use crate::nnkit::StochasticPolicy;
use crate::seed::{derive_seed, rng_from, stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub mean_return: f64,
    pub success_rate: f64,
    pub episodes: usize,
}

/// Run `episodes` full episodes; episode `i` resets from `derive_seed(seed, EVAL, i)`.
/// `greedy` acts with the policy mean, otherwise actions are sampled.
pub fn evaluate<P: StochasticPolicy>(policy: &P, env_cfg: &EnvConfig, episodes: usize, seed: u64, greedy: bool) -> Result<EvalStats> {
    let mut env = env_cfg.make()?;
    let mut total = 0.0;
    let mut successes = 0;
    for i in 0..episodes {
        let ep_seed = derive_seed(seed, stream::EVAL, i as u64);
        let mut rng = rng_from(ep_seed);
        let mut obs = env.reset_with(&mut rng);
        loop {
            let (mean, std) = policy.mean_std(&obs)?;
            let action: Vec<f64> = if greedy {
                mean
            } else {
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            let t = env.step(&action)?;
            total += t.reward;
            obs = t.next_obs;
            if t.done {
                successes += usize::from(t.goal_reached);
                break;
            }
        }
    }
    let n = episodes.max(1) as f64;
    Ok(EvalStats {
        mean_return: total / n,
        success_rate: successes as f64 / n,
        episodes,
    })
}
