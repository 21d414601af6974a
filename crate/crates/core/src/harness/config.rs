use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvConfig, EnvKind, GridworldConfig, PointmassConfig};
use crate::error::{Error, Result};
use crate::il::{IlBatchConfig, DEFAULT_INTERLEAVED_LR, DEFAULT_PRETRAIN_LR};
use crate::interleave::{EvalOptions, InterleaveConfig, MSpec, Mode, RunOptions};
use crate::nnkit::{Activation, MlpSpec};
use crate::rl::RlConfig;
use crate::seed::{derive_seed, stream};

/// Overrides of the per-environment RL defaults; unset keys keep [`RlConfig::for_env`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gae_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps_per_batch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize_advantages: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IlSection {
    pub batch_size: usize,
    pub pretrain_lr: f64,
    pub pretrain_steps: u64,
    /// Evaluate the policy every this many pretraining steps to pick the best checkpoint.
    pub eval_every: u64,
    /// Mini-batch shuffling seed; derived from the run seed when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shuffle_seed: Option<u64>,
}

impl Default for IlSection {
    fn default() -> Self {
        IlSection {
            batch_size: 64,
            pretrain_lr: DEFAULT_PRETRAIN_LR,
            pretrain_steps: 2000,
            eval_every: 200,
            shuffle_seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub residual_hidden: Vec<usize>,
    pub activation: Activation,
    pub init_log_std: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            policy_hidden: vec![64, 64],
            value_hidden: vec![64, 64],
            residual_hidden: vec![16],
            activation: Activation::Tanh,
            init_log_std: -0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoSection {
    /// Number of trajectories; the environment's default when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    pub noise: f64,
    /// Generation seed; the run seed when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Everything a command needs, read from one TOML file plus `key=value` overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvKind,
    pub seed: u64,
    pub mode: Mode,
    pub m: MSpec,
    pub alpha_il: f64,
    pub alpha_rl: f64,
    pub bc_reg_weight: f64,
    pub adaptive_floor: usize,
    pub fresh_rl_grad_for_surgery: bool,
    pub budget_env_steps: usize,
    pub gridworld: GridworldConfig,
    pub pointmass: PointmassConfig,
    pub rl: RlSection,
    pub il: IlSection,
    pub network: NetworkSection,
    pub eval: EvalOptions,
    pub demos: DemoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvKind::Gridworld,
            seed: 0,
            mode: Mode::FullNetSurgery,
            m: MSpec::Fixed(5),
            alpha_il: DEFAULT_INTERLEAVED_LR,
            alpha_rl: 1e-2,
            bc_reg_weight: 0.0,
            adaptive_floor: 1,
            fresh_rl_grad_for_surgery: false,
            budget_env_steps: 100_000,
            gridworld: GridworldConfig::default(),
            pointmass: PointmassConfig::default(),
            rl: RlSection::default(),
            il: IlSection::default(),
            network: NetworkSection::default(),
            eval: EvalOptions::default(),
            demos: DemoSection::default(),
        }
    }
}

impl RunConfig {
    pub fn for_env(env: EnvKind) -> Self {
        RunConfig {
            env,
            ..Default::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// Apply one `dotted.key=value` override. The value is parsed as a TOML value, falling
    /// back to a bare string, and the result is re-validated.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override '{assignment}' is not of the form key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("'{key}' does not name a config key")))?;
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        node.as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{key}' does not name a config key")))?
            .insert(parts[parts.len() - 1].to_string(), value);
        let updated: RunConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override '{assignment}': {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.env_config().validate()?;
        self.interleave().validate()?;
        self.rl_config().validate()?;
        self.il_config().validate()?;
        self.policy_spec()?;
        if self.network.value_hidden.is_empty() || self.network.residual_hidden.is_empty() {
            return Err(Error::Config("value_hidden and residual_hidden need at least one layer".into()));
        }
        if !self.network.init_log_std.is_finite() || !(self.demos.noise >= 0.0) {
            return Err(Error::Config("init_log_std must be finite and demo noise nonnegative".into()));
        }
        if self.demos.count == Some(0) {
            return Err(Error::Config("demos.count must be positive".into()));
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            kind: self.env,
            gridworld: self.gridworld.clone(),
            pointmass: self.pointmass.clone(),
        }
    }

    pub fn interleave(&self) -> InterleaveConfig {
        InterleaveConfig {
            mode: self.mode,
            m: self.m,
            alpha_il: self.alpha_il,
            alpha_rl: self.alpha_rl,
            bc_reg_weight: self.bc_reg_weight,
            adaptive_floor: self.adaptive_floor,
            fresh_rl_grad_for_surgery: self.fresh_rl_grad_for_surgery,
        }
    }

    pub fn rl_config(&self) -> RlConfig {
        let d = RlConfig::for_env(self.env);
        let r = &self.rl;
        RlConfig {
            gamma: r.gamma.unwrap_or(d.gamma),
            gae_lambda: r.gae_lambda.unwrap_or(d.gae_lambda),
            clip_eps: r.clip_eps.unwrap_or(d.clip_eps),
            lr: self.alpha_rl,
            steps_per_batch: r.steps_per_batch.unwrap_or(d.steps_per_batch),
            value_lr: r.value_lr.unwrap_or(d.value_lr),
            value_epochs: r.value_epochs.unwrap_or(d.value_epochs),
            normalize_advantages: r.normalize_advantages.unwrap_or(d.normalize_advantages),
            workers: r.workers.unwrap_or(d.workers),
        }
    }

    /// IL batching for pretraining; interleaved steps replace `lr` by `alpha_il`.
    pub fn il_config(&self) -> IlBatchConfig {
        IlBatchConfig {
            batch_size: self.il.batch_size,
            lr: self.il.pretrain_lr,
            shuffle_seed: self.il.shuffle_seed.unwrap_or_else(|| derive_seed(self.seed, stream::IL_SHUFFLE, u64::MAX)),
        }
    }

    pub fn policy_spec(&self) -> Result<MlpSpec> {
        let env = self.env_config();
        MlpSpec::policy(env.obs_dim(), &self.network.policy_hidden, env.act_dim(), self.network.activation)
    }

    pub fn demo_count(&self) -> usize {
        self.demos.count.unwrap_or_else(|| self.env.default_demo_count())
    }

    pub fn demo_seed(&self) -> u64 {
        self.demos.seed.unwrap_or(self.seed)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            value_hidden: self.network.value_hidden.clone(),
            residual_hidden: self.network.residual_hidden.clone(),
            activation: self.network.activation,
            value_net: None,
            eval: Some(self.eval.clone()),
            record_events: false,
            wall_time: false,
        }
    }

    /// Copy with every defaulted-by-absence key filled in, as recorded in run logs.
    pub fn resolved(&self) -> RunConfig {
        let rl = self.rl_config();
        let mut out = self.clone();
        out.rl = RlSection {
            gamma: Some(rl.gamma),
            gae_lambda: Some(rl.gae_lambda),
            clip_eps: Some(rl.clip_eps),
            steps_per_batch: Some(rl.steps_per_batch),
            value_lr: Some(rl.value_lr),
            value_epochs: Some(rl.value_epochs),
            normalize_advantages: Some(rl.normalize_advantages),
            workers: Some(rl.workers),
        };
        out.il.shuffle_seed = Some(self.il_config().shuffle_seed);
        out.demos.count = Some(self.demo_count());
        out.demos.seed = Some(self.demo_seed());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::from_toml_str("env = \"pointmass\"\nm = \"adaptive\"\n[rl]\nsteps_per_batch = 256\n").unwrap();
        assert_eq!(cfg.m, MSpec::Adaptive);
        assert_eq!(cfg.rl_config().steps_per_batch, 256);
        assert_eq!(cfg.rl_config().gamma, 0.99);
        assert_eq!(cfg.demo_count(), 50);
    }

    #[test]
    fn unknown_keys_are_errors() {
        for text in ["alpha_ill = 0.1", "[rl]\nlearning_rate = 0.1", "[gridworld]\nsise = 3"] {
            let err = RunConfig::from_toml_str(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("rl.steps_per_batch=128").unwrap();
        cfg.apply_override("m=adaptive").unwrap();
        cfg.apply_override("mode=rl_only").unwrap();
        cfg.apply_override("gridworld.start=[0, 0]").unwrap();
        assert_eq!(cfg.rl_config().steps_per_batch, 128);
        assert_eq!(cfg.m, MSpec::Adaptive);
        assert_eq!(cfg.mode, Mode::RlOnly);
        assert_eq!(cfg.gridworld.start, Some([0, 0]));
        assert!(cfg.apply_override("rl.nope=1").is_err());
        assert!(cfg.apply_override("alpha_il=-1").is_err());
        assert!(cfg.apply_override("novalue").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::for_env(EnvKind::Pointmass).resolved();
        let back = RunConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.resolved(), cfg);
    }
}
