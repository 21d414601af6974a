use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Transition;
use crate::error::{Error, Result};
use crate::seed::rng_from;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointmassConfig {
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub horizon: usize,
    /// Std of the additive position noise per step.
    pub sigma_env: f64,
    /// Start positions are drawn uniformly from `[-start_range, start_range]^2`.
    pub start_range: f64,
    /// Proportional gain of the expert controller.
    pub expert_gain: f64,
}

impl Default for PointmassConfig {
    fn default() -> Self {
        PointmassConfig {
            goal: [1.0, 0.0],
            goal_radius: 0.05,
            horizon: 100,
            sigma_env: 0.0,
            start_range: 1.0,
            expert_gain: 2.0,
        }
    }
}

impl PointmassConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("pointmass horizon must be positive".into()));
        }
        if !(self.goal_radius > 0.0) || !(self.sigma_env >= 0.0) || !(self.start_range > 0.0) {
            return Err(Error::Config(
                "pointmass needs goal_radius > 0, sigma_env >= 0 and start_range > 0".into(),
            ));
        }
        if self.goal.iter().any(|g| !g.is_finite()) || !self.expert_gain.is_finite() {
            return Err(Error::Config("pointmass goal and gain must be finite".into()));
        }
        Ok(())
    }

    pub fn distance_to_goal(&self, pos: &[f64]) -> f64 {
        ((pos[0] - self.goal[0]).powi(2) + (pos[1] - self.goal[1]).powi(2)).sqrt()
    }

    /// `clip(k_p (goal - pos))` to the unit box.
    pub fn expert_action(&self, pos: &[f64]) -> [f64; 2] {
        [
            (self.expert_gain * (self.goal[0] - pos[0])).clamp(-1.0, 1.0),
            (self.expert_gain * (self.goal[1] - pos[1])).clamp(-1.0, 1.0),
        ]
    }
}

/// 2-d point mass. Reward is charged on the pre-step distance:
/// `r = -||pos_t - goal|| - 0.01 ||clip(a_t)||^2`.
#[derive(Clone, Debug)]
pub struct Pointmass {
    cfg: PointmassConfig,
    pos: [f64; 2],
    steps: usize,
    terminal: bool,
    rng: ChaCha8Rng,
}

impl Pointmass {
    pub fn new(cfg: PointmassConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Pointmass {
            cfg,
            pos: [0.0, 0.0],
            steps: 0,
            terminal: false,
            rng: rng_from(0),
        })
    }

    pub fn config(&self) -> &PointmassConfig {
        &self.cfg
    }

    pub fn pos(&self) -> [f64; 2] {
        self.pos
    }

    pub fn step_count(&self) -> usize {
        self.steps
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    /// Reset with a start drawn from `seed`; the same seed also drives the dynamics noise.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        self.reset_with(&mut rng)
    }

    pub(crate) fn reset_with(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let r = self.cfg.start_range;
        self.pos = loop {
            let p = [rng.random_range(-r..=r), rng.random_range(-r..=r)];
            if self.cfg.distance_to_goal(&p) > self.cfg.goal_radius {
                break p;
            }
        };
        self.rng = rng_from(rng.random());
        self.steps = 0;
        self.terminal = false;
        self.obs()
    }

    pub fn set_pos(&mut self, pos: [f64; 2]) {
        self.pos = pos;
        self.steps = 0;
        self.terminal = false;
    }

    pub fn obs(&self) -> Vec<f64> {
        self.pos.to_vec()
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Transition> {
        if self.terminal {
            return Err(Error::Usage("step called on a terminal pointmass".into()));
        }
        if action.len() != 2 {
            return Err(Error::Shape(format!("pointmass action has length {}, expected 2", action.len())));
        }
        if action.iter().any(|a| a.is_nan()) {
            return Err(Error::Numeric("NaN pointmass action".into()));
        }
        let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        let obs = self.obs();
        let reward = -self.cfg.distance_to_goal(&self.pos) - 0.01 * (a[0] * a[0] + a[1] * a[1]);
        for (i, ai) in a.iter().enumerate() {
            let noise: f64 = if self.cfg.sigma_env > 0.0 {
                self.cfg.sigma_env * self.rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            self.pos[i] += 0.1 * ai + noise;
        }
        self.steps += 1;
        let goal_reached = self.cfg.distance_to_goal(&self.pos) <= self.cfg.goal_radius;
        self.terminal = goal_reached || self.steps >= self.cfg.horizon;
        Ok(Transition {
            obs,
            action: action.to_vec(),
            reward,
            next_obs: self.obs(),
            done: self.terminal,
            goal_reached,
            logp_behavior: 0.0,
        })
    }
}
