//! Toy MDPs with analytic experts: a sparse-reward gridworld and a dense-reward point mass.

pub mod demos;
pub mod gridworld;
pub mod pointmass;

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use demos::{coverage_metric, generate_demos, oracle_reference_states, DemoDataset, DemoPair};
pub use gridworld::{Gridworld, GridworldConfig, Move};
pub use pointmass::{Pointmass, PointmassConfig};

use crate::error::{Error, Result};

/// Discount used to build the gridworld expert; any value in (0, 1) yields shortest paths.
pub const EXPERT_GAMMA: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Gridworld,
    Pointmass,
}

impl EnvKind {
    pub const ALL: [EnvKind; 2] = [EnvKind::Gridworld, EnvKind::Pointmass];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Gridworld => "gridworld",
            EnvKind::Pointmass => "pointmass",
        }
    }

    pub fn default_demo_count(self) -> usize {
        match self {
            EnvKind::Gridworld => 20,
            EnvKind::Pointmass => 50,
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown env '{s}'; valid: gridworld, pointmass")))
    }
}

/// One environment step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Action as sampled by the behavior policy, before any clipping or discretization.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Episode ended (goal reached or horizon hit).
    pub done: bool,
    /// Episode ended at the goal; only then is the successor value zero.
    pub goal_reached: bool,
    pub logp_behavior: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub kind: EnvKind,
    #[serde(default)]
    pub gridworld: GridworldConfig,
    #[serde(default)]
    pub pointmass: PointmassConfig,
}

impl EnvConfig {
    pub fn new(kind: EnvKind) -> Self {
        EnvConfig {
            kind,
            gridworld: GridworldConfig::default(),
            pointmass: PointmassConfig::default(),
        }
    }

    pub fn gridworld(cfg: GridworldConfig) -> Self {
        EnvConfig {
            gridworld: cfg,
            ..EnvConfig::new(EnvKind::Gridworld)
        }
    }

    pub fn pointmass(cfg: PointmassConfig) -> Self {
        EnvConfig {
            pointmass: cfg,
            ..EnvConfig::new(EnvKind::Pointmass)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            EnvKind::Gridworld => self.gridworld.validate(),
            EnvKind::Pointmass => self.pointmass.validate(),
        }
    }

    pub fn make(&self) -> Result<Env> {
        Ok(match self.kind {
            EnvKind::Gridworld => Env::Gridworld(Gridworld::new(self.gridworld.clone())?),
            EnvKind::Pointmass => Env::Pointmass(Pointmass::new(self.pointmass.clone())?),
        })
    }

    pub fn obs_dim(&self) -> usize {
        2
    }

    pub fn act_dim(&self) -> usize {
        2
    }

    pub fn horizon(&self) -> usize {
        match self.kind {
            EnvKind::Gridworld => self.gridworld.horizon,
            EnvKind::Pointmass => self.pointmass.horizon,
        }
    }

    pub fn expert(&self) -> Result<Expert> {
        self.validate()?;
        Ok(match self.kind {
            EnvKind::Gridworld => Expert::Gridworld {
                values: self.gridworld.value_iteration(EXPERT_GAMMA),
                cfg: self.gridworld.clone(),
            },
            EnvKind::Pointmass => Expert::Pointmass(self.pointmass.clone()),
        })
    }
}

#[derive(Clone, Debug)]
pub enum Env {
    Gridworld(Gridworld),
    Pointmass(Pointmass),
}

impl Env {
    pub fn kind(&self) -> EnvKind {
        match self {
            Env::Gridworld(_) => EnvKind::Gridworld,
            Env::Pointmass(_) => EnvKind::Pointmass,
        }
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        match self {
            Env::Gridworld(g) => g.reset(seed),
            Env::Pointmass(p) => p.reset(seed),
        }
    }

    pub(crate) fn reset_with(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Env::Gridworld(g) => g.reset_with(rng),
            Env::Pointmass(p) => p.reset_with(rng),
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Transition> {
        match self {
            Env::Gridworld(g) => g.step(action),
            Env::Pointmass(p) => p.step(action),
        }
    }

    pub fn obs(&self) -> Vec<f64> {
        match self {
            Env::Gridworld(g) => g.obs(),
            Env::Pointmass(p) => p.obs(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        match self {
            Env::Gridworld(g) => g.is_terminal(),
            Env::Pointmass(p) => p.is_terminal(),
        }
    }

    pub fn step_count(&self) -> usize {
        match self {
            Env::Gridworld(g) => g.step_count(),
            Env::Pointmass(p) => p.step_count(),
        }
    }
}

/// Analytic expert for one environment configuration.
#[derive(Clone, Debug)]
pub enum Expert {
    Gridworld { cfg: GridworldConfig, values: Vec<Vec<f64>> },
    Pointmass(PointmassConfig),
}

impl Expert {
    /// Expert action for an observation: a unit axis move on the grid, the clipped
    /// proportional controller on the point mass.
    pub fn action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Expert::Gridworld { cfg, values } => {
                let cell = cfg.decode(obs)?;
                Ok(cfg.expert_move(values, cell, EXPERT_GAMMA).as_action().to_vec())
            }
            Expert::Pointmass(cfg) => {
                if obs.len() != 2 {
                    return Err(Error::Shape(format!("pointmass observation has length {}", obs.len())));
                }
                Ok(cfg.expert_action(obs).to_vec())
            }
        }
    }
}
