//! Expert demonstrations and their plain-text file format.
//!
//! ```text
//! #inril-demos v1 env=gridworld seed=7 noise=0 trajectories=20 obs_dim=2 act_dim=2 policy=expert
//! 0 -1 -1 0 1
//! 0 -1 -0.5 0 1
//! ...
//! ```
//!
//! Each record is `traj obs[0..obs_dim] action[0..act_dim]`, whitespace separated, with
//! numbers written in Rust's shortest round-trip notation. Records with the wrong field
//! count are rejected.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{EnvConfig, EnvKind};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, stream};

const MAGIC: &str = "#inril-demos";
const VERSION: &str = "v1";

#[derive(Clone, Debug, PartialEq)]
pub struct DemoPair {
    pub traj: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoDataset {
    pub env: EnvKind,
    pub seed: u64,
    pub noise_std: f64,
    pub n_trajectories: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub pairs: Vec<DemoPair>,
}

impl DemoDataset {
    /// Build a dataset from raw pairs, checking dimensions.
    pub fn from_pairs(env: EnvKind, pairs: Vec<DemoPair>, seed: u64, noise_std: f64) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or_else(|| Error::Usage("a demo dataset needs at least one pair".into()))?;
        let (obs_dim, act_dim) = (first.obs.len(), first.action.len());
        for (i, p) in pairs.iter().enumerate() {
            if p.obs.len() != obs_dim || p.action.len() != act_dim {
                return Err(Error::Shape(format!("demo pair {i} has inconsistent dimensions")));
            }
        }
        let n_trajectories = pairs.iter().map(|p| p.traj).max().unwrap_or(0) + 1;
        Ok(DemoDataset {
            env,
            seed,
            noise_std,
            n_trajectories,
            obs_dim,
            act_dim,
            pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.pairs.iter().map(|p| p.obs.clone()).collect()
    }

    /// Keep only the first `n` trajectories.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let pairs: Vec<DemoPair> = self.pairs.iter().filter(|p| p.traj < n).cloned().collect();
        DemoDataset::from_pairs(self.env, pairs, self.seed, self.noise_std)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MAGIC} {VERSION} env={} seed={} noise={} trajectories={} obs_dim={} act_dim={} policy=expert\n",
            self.env, self.seed, self.noise_std, self.n_trajectories, self.obs_dim, self.act_dim
        );
        for p in &self.pairs {
            out.push_str(&p.traj.to_string());
            for v in p.obs.iter().chain(&p.action) {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty demo file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(MAGIC) || fields.next() != Some(VERSION) {
            return Err(Error::Parse(format!("demo file must start with '{MAGIC} {VERSION}'")));
        }
        let mut env = None;
        let (mut seed, mut noise, mut n_traj, mut obs_dim, mut act_dim) = (None, None, None, None, None);
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("malformed header field '{f}'")))?;
            let bad = |_| Error::Parse(format!("bad value for header field '{k}': '{v}'"));
            match k {
                "env" => env = Some(v.parse::<EnvKind>().map_err(|e| Error::Parse(e.to_string()))?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "noise" => noise = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "trajectories" => n_traj = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "obs_dim" => obs_dim = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "act_dim" => act_dim = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                _ => {}
            }
        }
        let missing = |k: &str| Error::Parse(format!("demo header lacks '{k}'"));
        let env = env.ok_or_else(|| missing("env"))?;
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let noise = noise.ok_or_else(|| missing("noise"))?;
        let n_traj = n_traj.ok_or_else(|| missing("trajectories"))?;
        let obs_dim = obs_dim.ok_or_else(|| missing("obs_dim"))?;
        let act_dim = act_dim.ok_or_else(|| missing("act_dim"))?;

        let mut pairs = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 1 + obs_dim + act_dim {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, found {}",
                    i + 1,
                    1 + obs_dim + act_dim,
                    toks.len()
                )));
            }
            let traj: usize = toks[0]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad trajectory index", i + 1)))?;
            let nums = toks[1..]
                .iter()
                .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Parse(format!("line {}: non-numeric or non-finite field", i + 1)))?;
            pairs.push(DemoPair {
                traj,
                obs: nums[..obs_dim].to_vec(),
                action: nums[obs_dim..].to_vec(),
            });
        }
        let ds = DemoDataset::from_pairs(env, pairs, seed, noise).map_err(|e| Error::Parse(e.to_string()))?;
        if ds.n_trajectories != n_traj {
            return Err(Error::Parse(format!(
                "header declares {n_traj} trajectories, records contain {}",
                ds.n_trajectories
            )));
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DemoDataset::parse(&text)
    }
}

/// Roll the expert with additive Gaussian action noise, keeping only successful episodes.
/// The recorded action is the noisy one that was executed.
pub fn generate_demos(env_cfg: &EnvConfig, n_trajectories: usize, action_noise_std: f64, seed: u64) -> Result<DemoDataset> {
    if n_trajectories == 0 {
        return Err(Error::Usage("n_trajectories must be at least 1".into()));
    }
    if !(action_noise_std >= 0.0) || !action_noise_std.is_finite() {
        return Err(Error::Config("action noise std must be finite and nonnegative".into()));
    }
    let expert = env_cfg.expert()?;
    let mut env = env_cfg.make()?;
    let mut rng = rng_from(derive_seed(seed, stream::DEMOS, 0));
    let mut pairs = Vec::new();
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < n_trajectories {
        attempts += 1;
        if attempts > 100 * n_trajectories {
            return Err(Error::Env(format!(
                "only {accepted} of {n_trajectories} demos succeeded after {} attempts; the expert cannot solve this configuration",
                attempts - 1
            )));
        }
        let mut obs = env.reset_with(&mut rng);
        let mut episode = Vec::new();
        let success = loop {
            let mut a = expert.action(&obs)?;
            if action_noise_std > 0.0 {
                for ai in &mut a {
                    *ai += action_noise_std * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let t = env.step(&a)?;
            episode.push(DemoPair {
                traj: accepted,
                obs: t.obs,
                action: a,
            });
            obs = t.next_obs;
            if t.done {
                break t.goal_reached;
            }
        };
        if success {
            pairs.extend(episode);
            accepted += 1;
        }
    }
    DemoDataset::from_pairs(env_cfg.kind, pairs, seed, action_noise_std)
}

/// States visited by noiseless expert rollouts from `n_episodes` seeded starts.
pub fn oracle_reference_states(env_cfg: &EnvConfig, n_episodes: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let expert = env_cfg.expert()?;
    let mut env = env_cfg.make()?;
    let mut states = Vec::new();
    for i in 0..n_episodes {
        let mut obs = env.reset(derive_seed(seed, stream::EVAL, i as u64));
        loop {
            states.push(obs.clone());
            let t = env.step(&expert.action(&obs)?)?;
            obs = t.next_obs;
            if t.done {
                break;
            }
        }
    }
    Ok(states)
}

/// Mean over reference states of the Euclidean distance to the nearest demo state.
pub fn coverage_metric(demos: &DemoDataset, reference_states: &[Vec<f64>]) -> Result<f64> {
    if demos.is_empty() || reference_states.is_empty() {
        return Err(Error::Usage("coverage needs nonempty demo and reference sets".into()));
    }
    coverage_of_states(&demos.states(), reference_states)
}

pub fn coverage_of_states(demo_states: &[Vec<f64>], reference_states: &[Vec<f64>]) -> Result<f64> {
    if demo_states.is_empty() || reference_states.is_empty() {
        return Err(Error::Usage("coverage needs nonempty demo and reference sets".into()));
    }
    let mut total = 0.0;
    for r in reference_states {
        let mut best = f64::INFINITY;
        for d in demo_states {
            if d.len() != r.len() {
                return Err(Error::Shape("demo and reference states differ in dimension".into()));
            }
            let dist2: f64 = d.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(dist2);
        }
        total += best.sqrt();
    }
    Ok(total / reference_states.len() as f64)
}
