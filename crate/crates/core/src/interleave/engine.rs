use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::alignment::{dual_cone_combine, measure_alignment};
use super::residual::ResidualPolicyPair;
use super::schedule::{adaptive_m, balance_rule, Ema, MSpec, RatioConstants, ScheduleState};
use crate::envs::{DemoDataset, EnvConfig};
use crate::error::{Error, Result};
use crate::il::{batch_indices, il_grad_with_variance, il_loss, il_loss_and_grad_on, IlBatchConfig, DIVERGENCE_LOSS};
use crate::nnkit::{Activation, Mlp, MlpSpec, ParamVector, StochasticPolicy};
use crate::rl::update::{fit_value, update_seed};
use crate::rl::{collect_rollouts, compute_gae, evaluate, rl_loss_and_grad, rl_update_cycle, EvalStats, RlConfig, RolloutBatch};
use crate::seed::{derive_seed, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One IL step per cycle along the dual-cone combination of the IL and RL gradients.
    FullNetSurgery,
    /// One plain IL step per cycle on the full network.
    FullNetNaive,
    /// IL steps on the base network, RL updates on an additive residual.
    NetworkSeparation,
    /// RL updates only; IL losses are measured and logged but never applied.
    RlOnly,
    /// IL steps only; rollouts are still collected for statistics and value fitting.
    IlOnly,
    /// Every RL update descends `L_RL + bc_reg_weight * L_IL`; no separate IL steps.
    BcLossReg,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::FullNetSurgery,
        Mode::FullNetNaive,
        Mode::NetworkSeparation,
        Mode::RlOnly,
        Mode::IlOnly,
        Mode::BcLossReg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::FullNetSurgery => "full_net_surgery",
            Mode::FullNetNaive => "full_net_naive",
            Mode::NetworkSeparation => "network_separation",
            Mode::RlOnly => "rl_only",
            Mode::IlOnly => "il_only",
            Mode::BcLossReg => "bc_loss_reg",
        }
    }

    fn has_il_step(self) -> bool {
        !matches!(self, Mode::BcLossReg)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Mode::ALL.iter().map(|m| m.name()).collect();
            Error::Usage(format!("unknown mode '{s}'; valid: {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterleaveConfig {
    pub mode: Mode,
    pub m: MSpec,
    pub alpha_il: f64,
    pub alpha_rl: f64,
    pub bc_reg_weight: f64,
    pub adaptive_floor: usize,
    /// Collect a fresh batch for the RL gradient inside the surgery step instead of
    /// reusing the previous RL batch. Fresh batches count against the budget.
    pub fresh_rl_grad_for_surgery: bool,
}

impl Default for InterleaveConfig {
    fn default() -> Self {
        InterleaveConfig {
            mode: Mode::FullNetSurgery,
            m: MSpec::Fixed(5),
            alpha_il: crate::il::DEFAULT_INTERLEAVED_LR,
            alpha_rl: 1e-2,
            bc_reg_weight: 0.0,
            adaptive_floor: 1,
            fresh_rl_grad_for_surgery: false,
        }
    }
}

impl InterleaveConfig {
    pub fn validate(&self) -> Result<()> {
        if let MSpec::Fixed(0) = self.m {
            return Err(Error::Config("m must be at least 1".into()));
        }
        for (name, v) in [("alpha_il", self.alpha_il), ("alpha_rl", self.alpha_rl), ("bc_reg_weight", self.bc_reg_weight)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if self.bc_reg_weight > 0.0 && self.mode != Mode::BcLossReg {
            return Err(Error::Config("bc_reg_weight is only used by mode bc_loss_reg".into()));
        }
        if self.adaptive_floor == 0 {
            return Err(Error::Config("adaptive_floor must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// Evaluate after every this many cycles and after the last one.
    pub every_cycles: usize,
    pub episodes: usize,
    pub greedy: bool,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            every_cycles: 10,
            episodes: 50,
            greedy: true,
            seed: 12345,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub value_hidden: Vec<usize>,
    pub residual_hidden: Vec<usize>,
    pub activation: Activation,
    /// Start from this value network instead of a freshly initialized one.
    pub value_net: Option<Mlp>,
    pub eval: Option<EvalOptions>,
    /// Keep a per-update event list with parameter digests.
    pub record_events: bool,
    /// Put wall-clock seconds into cycle records (makes logs non-reproducible).
    pub wall_time: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            value_hidden: vec![64, 64],
            residual_hidden: vec![16],
            activation: Activation::Tanh,
            value_net: None,
            eval: None,
            record_events: false,
            wall_time: false,
        }
    }
}

/// Policy being fine-tuned.
#[derive(Clone, Debug, PartialEq)]
pub enum FinetunePolicy {
    Full(Mlp),
    Separated(ResidualPolicyPair),
}

impl FinetunePolicy {
    pub fn base(&self) -> &Mlp {
        match self {
            FinetunePolicy::Full(m) => m,
            FinetunePolicy::Separated(p) => &p.base,
        }
    }

    pub fn residual(&self) -> Option<&Mlp> {
        match self {
            FinetunePolicy::Full(_) => None,
            FinetunePolicy::Separated(p) => Some(&p.residual),
        }
    }

    /// Network that IL steps act on.
    fn il_target(&self) -> &Mlp {
        self.base()
    }

    fn il_target_mut(&mut self) -> &mut Mlp {
        match self {
            FinetunePolicy::Full(m) => m,
            FinetunePolicy::Separated(p) => &mut p.base,
        }
    }
}

impl StochasticPolicy for FinetunePolicy {
    fn obs_dim(&self) -> usize {
        self.base().obs_dim()
    }

    fn act_dim(&self) -> usize {
        self.base().out_dim()
    }

    fn n_trainable(&self) -> usize {
        match self {
            FinetunePolicy::Full(m) => m.n_trainable(),
            FinetunePolicy::Separated(p) => p.n_trainable(),
        }
    }

    fn mean_std(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            FinetunePolicy::Full(m) => m.mean_std(obs),
            FinetunePolicy::Separated(p) => p.mean_std(obs),
        }
    }

    fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        match self {
            FinetunePolicy::Full(m) => StochasticPolicy::log_prob(m, obs, action),
            FinetunePolicy::Separated(p) => p.log_prob(obs, action),
        }
    }

    fn accumulate_log_prob_grad(&self, obs: &[f64], action: &[f64], weight: f64, grad: &mut [f64]) -> Result<f64> {
        match self {
            FinetunePolicy::Full(m) => StochasticPolicy::accumulate_log_prob_grad(m, obs, action, weight, grad),
            FinetunePolicy::Separated(p) => p.accumulate_log_prob_grad(obs, action, weight, grad),
        }
    }

    fn apply_step(&mut self, grad: &ParamVector, lr: f64) -> Result<()> {
        match self {
            FinetunePolicy::Full(m) => StochasticPolicy::apply_step(m, grad, lr),
            FinetunePolicy::Separated(p) => p.apply_step(grad, lr),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    /// IL parameter step (plain or surgery-combined).
    Il,
    /// RL parameter step.
    Rl,
    /// RL step on the BC-regularized objective.
    RlBc,
    /// Rollout collected without a policy step (il_only mode).
    Rollout,
}

/// One entry of the optional per-update event list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub cycle: usize,
    pub kind: UpdateKind,
    pub env_steps: usize,
    /// Digest of the full policy, or of the base network under network separation.
    pub base_digest: String,
    pub residual_digest: Option<String>,
}

/// Per-cycle log record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Cumulative environment steps.
    pub env_steps: usize,
    /// Cumulative parameter updates (IL + RL).
    pub updates: usize,
    pub il_updates: usize,
    pub rl_updates: usize,
    pub m_used: usize,
    /// Mean over this cycle's rollout batches of the batch mean episode return.
    pub mean_return: f64,
    pub success_rate: f64,
    /// Full-batch IL loss of the acting policy at the end of the cycle.
    pub il_loss: f64,
    pub value_loss: f64,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub grad_norm_il: Option<f64>,
    #[serde(default)]
    pub grad_norm_rl: Option<f64>,
    /// Balance-equation ratio from the online estimates (adaptive runs only).
    #[serde(default)]
    pub m_balance: Option<f64>,
    #[serde(default)]
    pub eval_return: Option<f64>,
    #[serde(default)]
    pub eval_success: Option<f64>,
    #[serde(default)]
    pub wall_time_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged(String),
}

#[derive(Clone, Debug)]
pub struct BestCheckpoint {
    pub cycle: usize,
    pub eval: EvalStats,
    pub policy: FinetunePolicy,
}

#[derive(Clone, Debug)]
pub struct InrilOutcome {
    /// Final policy, or the last good one if the run diverged.
    pub policy: FinetunePolicy,
    pub value: Mlp,
    pub records: Vec<CycleRecord>,
    pub events: Vec<UpdateEvent>,
    pub status: RunStatus,
    pub best: Option<BestCheckpoint>,
    pub schedule: ScheduleState,
}

/// Env steps of one cycle with `m` RL slots.
pub fn cycle_env_steps(cfg: &InterleaveConfig, rl_cfg: &RlConfig, m: usize) -> usize {
    let extra = usize::from(cfg.mode == Mode::FullNetSurgery && cfg.fresh_rl_grad_for_surgery);
    (m + extra) * rl_cfg.steps_per_batch
}

/// Number of full cycles a fixed-m run completes within `budget`.
pub fn planned_cycles(cfg: &InterleaveConfig, rl_cfg: &RlConfig, m: usize, budget: usize) -> usize {
    budget / cycle_env_steps(cfg, rl_cfg, m)
}

/// Online estimates for the adaptive ratio on MDPs: secant smoothness estimates and the
/// per-sample IL gradient variance, all smoothed with the same EMA as the norms.
#[derive(Clone, Debug, Default)]
struct OnlineConstants {
    l_il: Ema,
    l_rl: Ema,
    il_noise: Ema,
}

impl OnlineConstants {
    fn get(&self, alpha_il: f64, alpha_rl: f64) -> Option<RatioConstants> {
        let (l_il, l_rl) = (self.l_il.get()?, self.l_rl.get()?);
        if !(l_il > 0.0 && l_rl > 0.0) {
            return None;
        }
        Some(RatioConstants {
            c_il: alpha_il * l_il,
            c_rl: alpha_rl * l_rl,
            l_il,
            l_rl,
            il_noise: self.il_noise.get().unwrap_or(0.0),
        })
    }
}

fn secant(g0: &ParamVector, g1: &ParamVector, p0: &ParamVector, p1: &ParamVector) -> Option<f64> {
    let dp = p1.add_scaled(p0, -1.0).ok()?.norm();
    if dp <= 0.0 {
        return None;
    }
    Some(g1.add_scaled(g0, -1.0).ok()?.norm() / dp)
}

struct Engine<'a> {
    demos: &'a DemoDataset,
    env: &'a EnvConfig,
    cfg: &'a InterleaveConfig,
    rl_cfg: RlConfig,
    il_cfg: IlBatchConfig,
    opts: &'a RunOptions,
    seed: u64,
    policy: FinetunePolicy,
    value: Mlp,
    state: ScheduleState,
    online: OnlineConstants,
    last_batch: Option<RolloutBatch>,
    rl_k: u64,
    il_k: u64,
    env_steps: usize,
    il_updates: usize,
    rl_updates: usize,
    events: Vec<UpdateEvent>,
}

impl Engine<'_> {
    fn event(&mut self, cycle: usize, kind: UpdateKind) {
        if !self.opts.record_events {
            return;
        }
        self.events.push(UpdateEvent {
            cycle,
            kind,
            env_steps: self.env_steps,
            base_digest: self.policy.base().params().digest(),
            residual_digest: self.policy.residual().map(|r| r.params().digest()),
        });
    }

    fn rl_grad_on(&self, batch: &RolloutBatch) -> Result<ParamVector> {
        Ok(rl_loss_and_grad(&self.policy, batch, &self.rl_cfg)?.1)
    }

    fn run_cycle(&mut self, t: usize, m: usize, start: &Instant) -> Result<CycleRecord> {
        let adaptive = self.cfg.m == MSpec::Adaptive;
        let mut rho = None;
        let mut g_il_norm = None;
        let mut g_rl_norm = None;

        if self.cfg.mode.has_il_step() {
            let idx = batch_indices(self.demos.len(), &self.il_cfg, self.il_k)?;
            self.il_k += 1;
            let (_, g_il, var) = if adaptive {
                il_grad_with_variance(self.policy.il_target(), self.demos, &idx)?
            } else {
                let (l, g) = il_loss_and_grad_on(self.policy.il_target(), self.demos, &idx)?;
                (l, g, 0.0)
            };
            g_il_norm = Some(g_il.norm());

            let g_rl = if self.cfg.mode == Mode::FullNetSurgery && self.cfg.fresh_rl_grad_for_surgery {
                let mut b = collect_rollouts(
                    &self.policy,
                    self.env,
                    &self.rl_cfg,
                    derive_seed(self.seed, stream::SURGERY_BATCH, t as u64),
                )?;
                compute_gae(&mut b, &self.value, &self.rl_cfg)?;
                self.env_steps += b.len();
                Some(self.rl_grad_on(&b)?)
            } else if let Some(b) = &self.last_batch {
                Some(self.rl_grad_on(b)?)
            } else {
                None
            };
            if let Some(g) = &g_rl {
                g_rl_norm = Some(g.norm());
                rho = Some(match self.policy {
                    // IL and RL gradients live on disjoint parameter blocks.
                    FinetunePolicy::Separated(_) => 0.0,
                    FinetunePolicy::Full(_) => measure_alignment(&g_il, g),
                });
            }

            let direction = match (self.cfg.mode, &g_rl) {
                (Mode::RlOnly, _) => None,
                (Mode::FullNetSurgery, Some(g)) => Some(dual_cone_combine(&g_il, g)),
                _ => Some(g_il.clone()),
            };
            if let Some(d) = direction {
                let before = self.policy.il_target().params().clone();
                self.policy.il_target_mut().apply_step(&d, self.cfg.alpha_il)?;
                self.il_updates += 1;
                self.event(t, UpdateKind::Il);
                if adaptive {
                    let (_, g_after) = il_loss_and_grad_on(self.policy.il_target(), self.demos, &idx)?;
                    if let Some(l) = secant(&g_il, &g_after, &before, self.policy.il_target().params()) {
                        self.online.l_il.update(l);
                    }
                    self.online.il_noise.update(var / idx.len() as f64);
                }
            }
        }

        let mut returns = Vec::with_capacity(m);
        let mut successes = Vec::with_capacity(m);
        let mut value_loss = f64::NAN;
        for _ in 0..m {
            let seed_k = update_seed(self.seed, self.rl_k);
            self.rl_k += 1;
            let (batch, grad, kind) = match self.cfg.mode {
                Mode::IlOnly => {
                    let mut b = collect_rollouts(&self.policy, self.env, &self.rl_cfg, seed_k)?;
                    compute_gae(&mut b, &self.value, &self.rl_cfg)?;
                    value_loss = fit_value(&mut self.value, &b, &self.rl_cfg)?.1;
                    (b, None, UpdateKind::Rollout)
                }
                Mode::BcLossReg => {
                    let mut b = collect_rollouts(&self.policy, self.env, &self.rl_cfg, seed_k)?;
                    compute_gae(&mut b, &self.value, &self.rl_cfg)?;
                    let g_rl = self.rl_grad_on(&b)?;
                    let idx = batch_indices(self.demos.len(), &self.il_cfg, self.il_k)?;
                    self.il_k += 1;
                    let (_, g_il) = il_loss_and_grad_on(&self.policy, self.demos, &idx)?;
                    if rho.is_none() {
                        rho = Some(measure_alignment(&g_il, &g_rl));
                        g_il_norm = Some(g_il.norm());
                        g_rl_norm = Some(g_rl.norm());
                    }
                    let g = g_rl.add_scaled(&g_il, self.cfg.bc_reg_weight)?;
                    self.policy.apply_step(&g, self.cfg.alpha_rl)?;
                    value_loss = fit_value(&mut self.value, &b, &self.rl_cfg)?.1;
                    (b, Some(g_rl), UpdateKind::RlBc)
                }
                _ => {
                    let u = rl_update_cycle(&mut self.policy, &mut self.value, self.env, &self.rl_cfg, seed_k)?;
                    value_loss = u.stats.value_loss;
                    (u.batch, Some(u.grad), UpdateKind::Rl)
                }
            };
            self.env_steps += batch.len();
            returns.push(batch.mean_return());
            successes.push(batch.success_rate());
            if grad.is_some() {
                self.rl_updates += 1;
            }
            if g_rl_norm.is_none() {
                g_rl_norm = grad.as_ref().map(ParamVector::norm);
            }
            if adaptive {
                if let Some(g0) = &grad {
                    // Same batch, post-step parameters.
                    let g1 = self.rl_grad_on(&batch)?;
                    let dp = self.cfg.alpha_rl * g0.norm();
                    if dp > 0.0 {
                        self.online.l_rl.update(g1.add_scaled(g0, -1.0)?.norm() / dp);
                    }
                }
            }
            self.event(t, kind);
            self.last_batch = Some(batch);
        }

        let il_loss_now = il_loss(&self.policy, self.demos)?;
        if !il_loss_now.is_finite() || il_loss_now > DIVERGENCE_LOSS {
            return Err(Error::Diverged(format!("IL loss {il_loss_now:e} at end of cycle {t}")));
        }
        if let (Some(r), Some(gi), Some(gr)) = (rho, g_il_norm, g_rl_norm) {
            self.state.observe(r, gi, gr);
        }
        let m_balance = match (adaptive, self.state.smoothed(), self.online.get(self.cfg.alpha_il, self.cfg.alpha_rl)) {
            (true, Some((r, gi, gr)), Some(k)) if gr > 0.0 => Some(balance_rule(r, gi, gr, &k)),
            _ => None,
        };
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let record = CycleRecord {
            cycle: t,
            env_steps: self.env_steps,
            updates: self.il_updates + self.rl_updates,
            il_updates: self.il_updates,
            rl_updates: self.rl_updates,
            m_used: m,
            mean_return: mean(&returns),
            success_rate: mean(&successes),
            il_loss: il_loss_now,
            value_loss,
            rho,
            grad_norm_il: g_il_norm,
            grad_norm_rl: g_rl_norm,
            m_balance,
            eval_return: None,
            eval_success: None,
            wall_time_s: self.opts.wall_time.then(|| start.elapsed().as_secs_f64()),
        };
        Ok(record)
    }
}

/// Fine-tune `pretrained` with cycles of one IL step followed by `m(t)` RL updates until
/// the env-step budget is spent.
///
/// Fixed `m` runs complete `floor(budget / (m N_RL))` whole cycles; adaptive runs shorten
/// the final cycle to fit the budget. The `k`-th RL update of a run is seeded exactly as
/// the `k`-th update of [`crate::rl::train_rl`], so `rl_only` reproduces the plain loop.
#[allow(clippy::too_many_arguments)]
pub fn run_inril(
    pretrained: &Mlp,
    demos: &DemoDataset,
    env: &EnvConfig,
    cfg: &InterleaveConfig,
    rl_cfg: &RlConfig,
    il_cfg: &IlBatchConfig,
    budget_env_steps: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<InrilOutcome> {
    run_inril_streaming(pretrained, demos, env, cfg, rl_cfg, il_cfg, budget_env_steps, seed, opts, &mut |_| Ok(()))
}

/// [`run_inril`] calling `on_record` with each cycle record as soon as it is complete.
#[allow(clippy::too_many_arguments)]
pub fn run_inril_streaming(
    pretrained: &Mlp,
    demos: &DemoDataset,
    env: &EnvConfig,
    cfg: &InterleaveConfig,
    rl_cfg: &RlConfig,
    il_cfg: &IlBatchConfig,
    budget_env_steps: usize,
    seed: u64,
    opts: &RunOptions,
    on_record: &mut dyn FnMut(&CycleRecord) -> Result<()>,
) -> Result<InrilOutcome> {
    cfg.validate()?;
    env.validate()?;
    il_cfg.validate()?;
    let mut rl_cfg = rl_cfg.clone();
    rl_cfg.lr = cfg.alpha_rl;
    rl_cfg.validate()?;
    let mut il_cfg = il_cfg.clone();
    il_cfg.lr = cfg.alpha_il;
    if pretrained.obs_dim() != env.obs_dim() || pretrained.out_dim() != env.act_dim() {
        return Err(Error::Shape(format!(
            "pretrained policy maps {}->{} but {} needs {}->{}",
            pretrained.obs_dim(),
            pretrained.out_dim(),
            env.kind,
            env.obs_dim(),
            env.act_dim()
        )));
    }
    let min_m = match cfg.m {
        MSpec::Fixed(m) => m,
        MSpec::Adaptive => 1,
    };
    let fixed_cycles = planned_cycles(cfg, &rl_cfg, min_m, budget_env_steps);
    if fixed_cycles == 0 {
        return Err(Error::Usage(format!(
            "budget of {budget_env_steps} env steps is smaller than one cycle ({} steps)",
            cycle_env_steps(cfg, &rl_cfg, min_m)
        )));
    }

    let policy = match cfg.mode {
        Mode::NetworkSeparation => FinetunePolicy::Separated(ResidualPolicyPair::new(
            pretrained.clone(),
            &opts.residual_hidden,
            opts.activation,
            derive_seed(seed, stream::INIT_RESIDUAL, 0),
        )?),
        _ => FinetunePolicy::Full(pretrained.clone()),
    };
    let value = match &opts.value_net {
        Some(v) => v.clone(),
        None => Mlp::new(
            MlpSpec::value(env.obs_dim(), &opts.value_hidden, opts.activation)?,
            derive_seed(seed, stream::INIT_VALUE, 0),
            0.0,
        )?,
    };

    let mut eng = Engine {
        demos,
        env,
        cfg,
        rl_cfg,
        il_cfg,
        opts,
        seed,
        policy,
        value,
        state: ScheduleState::default(),
        online: OnlineConstants::default(),
        last_batch: None,
        rl_k: 0,
        il_k: 0,
        env_steps: 0,
        il_updates: 0,
        rl_updates: 0,
        events: Vec::new(),
    };
    let start = Instant::now();
    let mut records = Vec::new();
    let mut status = RunStatus::Completed;
    let mut best: Option<BestCheckpoint> = None;

    for t in 0.. {
        let m = match cfg.m {
            MSpec::Fixed(m) => {
                if t >= fixed_cycles {
                    break;
                }
                m
            }
            MSpec::Adaptive => {
                let remaining = budget_env_steps - eng.env_steps;
                let fits = remaining / eng.rl_cfg.steps_per_batch;
                let extra = cycle_env_steps(cfg, &eng.rl_cfg, 0) / eng.rl_cfg.steps_per_batch;
                if fits <= extra {
                    break;
                }
                let k = eng.online.get(cfg.alpha_il, cfg.alpha_rl);
                let m = k.map_or(cfg.adaptive_floor, |k| adaptive_m(&eng.state, &k, cfg.adaptive_floor));
                m.min(fits - extra)
            }
        };
        let snapshot = (eng.policy.clone(), eng.value.clone());
        match eng.run_cycle(t, m, &start) {
            Ok(mut record) => {
                if let Some(ev) = &opts.eval {
                    let last = match cfg.m {
                        MSpec::Fixed(_) => t + 1 == fixed_cycles,
                        MSpec::Adaptive => budget_env_steps - eng.env_steps < eng.rl_cfg.steps_per_batch,
                    };
                    if (ev.every_cycles > 0 && (t + 1) % ev.every_cycles == 0) || last {
                        let stats = evaluate(&eng.policy, env, ev.episodes, ev.seed, ev.greedy)?;
                        record.eval_return = Some(stats.mean_return);
                        record.eval_success = Some(stats.success_rate);
                        if best.as_ref().is_none_or(|b| stats.mean_return > b.eval.mean_return) {
                            best = Some(BestCheckpoint {
                                cycle: t,
                                eval: stats,
                                policy: eng.policy.clone(),
                            });
                        }
                    }
                }
                eng.state.finish_cycle(m);
                on_record(&record)?;
                records.push(record);
            }
            Err(e @ (Error::Diverged(_) | Error::Numeric(_))) => {
                eng.policy = snapshot.0;
                eng.value = snapshot.1;
                status = RunStatus::Diverged(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }

    Ok(InrilOutcome {
        policy: eng.policy,
        value: eng.value,
        records,
        events: eng.events,
        status,
        best,
        schedule: eng.state,
    })
}
