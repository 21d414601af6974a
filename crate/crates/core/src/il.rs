//! Behavior cloning: mini-batch negative log-likelihood of expert actions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::envs::DemoDataset;
use crate::error::{Error, Result};
use crate::nnkit::{Mlp, ParamVector, StochasticPolicy};
use crate::seed::{derive_seed, rng_from, stream};

/// Pretraining rate. Interleaved IL steps default to [`DEFAULT_INTERLEAVED_LR`].
pub const DEFAULT_PRETRAIN_LR: f64 = 1e-2;
pub const DEFAULT_INTERLEAVED_LR: f64 = 1e-3;
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlBatchConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub shuffle_seed: u64,
}

impl Default for IlBatchConfig {
    fn default() -> Self {
        IlBatchConfig {
            batch_size: 64,
            lr: DEFAULT_PRETRAIN_LR,
            shuffle_seed: 0,
        }
    }
}

impl IlBatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Usage("IL batch size must be positive".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("IL learning rate must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Batch size actually used on a dataset of `n` pairs (capped at `n`).
    pub fn effective_batch(&self, n: usize) -> usize {
        self.batch_size.min(n)
    }
}

/// Indices of the mini-batch used at `step_index`.
///
/// Each epoch is a fresh permutation drawn from `(shuffle_seed, epoch)`; an epoch has
/// `floor(n / batch)` batches and drops the remainder. A full batch uses `0..n` in order.
pub fn batch_indices(n: usize, cfg: &IlBatchConfig, step_index: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Usage("empty demo dataset".into()));
    }
    cfg.validate()?;
    let bs = cfg.effective_batch(n);
    if bs == n {
        return Ok((0..n).collect());
    }
    let per_epoch = (n / bs) as u64;
    let epoch = step_index / per_epoch;
    let k = (step_index % per_epoch) as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from(derive_seed(cfg.shuffle_seed, stream::IL_SHUFFLE, epoch)));
    Ok(perm[k * bs..(k + 1) * bs].to_vec())
}

/// Mean NLL and its gradient over an explicit set of demo indices.
pub fn il_loss_and_grad_on<P: StochasticPolicy>(policy: &P, demos: &DemoDataset, indices: &[usize]) -> Result<(f64, ParamVector)> {
    if indices.is_empty() {
        return Err(Error::Usage("empty IL batch".into()));
    }
    check_dims(policy, demos)?;
    let w = 1.0 / indices.len() as f64;
    let mut grad = ParamVector::zeros(policy.n_trainable());
    let mut loss = 0.0;
    for &i in indices {
        let p = &demos.pairs[i];
        loss -= policy.accumulate_log_prob_grad(&p.obs, &p.action, -w, grad.as_mut_slice())?;
    }
    Ok((loss * w, grad))
}

/// Mini-batch IL loss `mean(-log pi(a*|s))` and gradient at `step_index`.
pub fn il_loss_and_grad<P: StochasticPolicy>(
    policy: &P,
    demos: &DemoDataset,
    cfg: &IlBatchConfig,
    step_index: u64,
) -> Result<(f64, ParamVector)> {
    let idx = batch_indices(demos.len(), cfg, step_index)?;
    il_loss_and_grad_on(policy, demos, &idx)
}

/// Deterministic full-batch IL loss.
pub fn il_loss<P: StochasticPolicy>(policy: &P, demos: &DemoDataset) -> Result<f64> {
    if demos.is_empty() {
        return Err(Error::Usage("empty demo dataset".into()));
    }
    check_dims(policy, demos)?;
    let mut total = 0.0;
    for p in &demos.pairs {
        total -= policy.log_prob(&p.obs, &p.action)?;
    }
    Ok(total / demos.len() as f64)
}

/// Batch gradient plus the per-sample gradient variance `mean_i ||g_i - g||^2`.
pub fn il_grad_with_variance<P: StochasticPolicy>(policy: &P, demos: &DemoDataset, indices: &[usize]) -> Result<(f64, ParamVector, f64)> {
    let (loss, mean) = il_loss_and_grad_on(policy, demos, indices)?;
    let mut var = 0.0;
    let mut g = vec![0.0; policy.n_trainable()];
    for &i in indices {
        g.iter_mut().for_each(|v| *v = 0.0);
        let p = &demos.pairs[i];
        policy.accumulate_log_prob_grad(&p.obs, &p.action, -1.0, &mut g)?;
        var += g.iter().zip(mean.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok((loss, mean, var / indices.len() as f64))
}

fn check_dims<P: StochasticPolicy>(policy: &P, demos: &DemoDataset) -> Result<()> {
    if policy.obs_dim() != demos.obs_dim || policy.act_dim() != demos.act_dim {
        return Err(Error::Shape(format!(
            "policy maps {}->{} but demos are {}->{}",
            policy.obs_dim(),
            policy.act_dim(),
            demos.obs_dim,
            demos.act_dim
        )));
    }
    Ok(())
}

/// Optional evaluation hook for best-checkpoint selection: returns a score (higher is better).
pub type Evaluator<'a> = dyn FnMut(&Mlp) -> Result<f64> + 'a;

#[derive(Clone, Debug)]
pub struct PretrainOptions {
    /// Step index of the first step (nonzero when resuming).
    pub start_step: u64,
    /// Evaluate every this many steps when an evaluator is supplied.
    pub eval_every: u64,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            start_step: 0,
            eval_every: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    /// Best-evaluated policy when an evaluator is used, otherwise the final policy.
    pub selected: Mlp,
    pub final_policy: Mlp,
    /// `(step, mini-batch loss)` before each update.
    pub loss_curve: Vec<(u64, f64)>,
    pub initial_full_loss: f64,
    pub final_full_loss: f64,
    pub best_full_loss: f64,
    /// `final_full_loss - best_full_loss`, the empirical stand-in for the pretraining gap.
    pub eps_il_proxy: f64,
    /// Set when the final full-batch loss exceeds the initial one.
    pub loss_increased: bool,
    pub selected_step: u64,
    /// `(step, score)` from the evaluator.
    pub evals: Vec<(u64, f64)>,
}

/// Plain SGD on the IL loss for `n_steps` mini-batch steps.
pub fn pretrain(
    policy: &Mlp,
    demos: &DemoDataset,
    n_steps: u64,
    cfg: &IlBatchConfig,
    opts: &PretrainOptions,
    mut evaluator: Option<&mut Evaluator<'_>>,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let mut current = policy.clone();
    let initial_full_loss = il_loss(&current, demos)?;
    let mut best_full_loss = initial_full_loss;
    let mut loss_curve = Vec::with_capacity(n_steps as usize);
    let mut evals = Vec::new();
    let mut selected = current.clone();
    let mut selected_step = opts.start_step;
    let mut best_score = f64::NEG_INFINITY;

    let mut consider = |net: &Mlp, step: u64, evals: &mut Vec<(u64, f64)>, ev: &mut Option<&mut Evaluator<'_>>| -> Result<()> {
        if let Some(f) = ev.as_deref_mut() {
            let score = f(net)?;
            evals.push((step, score));
            if score > best_score {
                best_score = score;
                selected = net.clone();
                selected_step = step;
            }
        }
        Ok(())
    };

    for k in 0..n_steps {
        let step = opts.start_step + k;
        if opts.eval_every > 0 && k % opts.eval_every == 0 {
            consider(&current, step, &mut evals, &mut evaluator)?;
        }
        let (loss, grad) = il_loss_and_grad(&current, demos, cfg, step)?;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged(format!("IL loss {loss:e} at step {step}")));
        }
        loss_curve.push((step, loss));
        current
            .apply_step(&grad, cfg.lr)
            .map_err(|e| Error::Diverged(format!("IL step {step}: {e}")))?;
        if (k + 1) % 50 == 0 || k + 1 == n_steps {
            let full = il_loss(&current, demos)?;
            if !full.is_finite() || full > DIVERGENCE_LOSS {
                return Err(Error::Diverged(format!("IL full-batch loss {full:e} after step {step}")));
            }
            best_full_loss = best_full_loss.min(full);
        }
    }
    let end_step = opts.start_step + n_steps;
    consider(&current, end_step, &mut evals, &mut evaluator)?;
    if evals.is_empty() {
        selected = current.clone();
        selected_step = end_step;
    }
    let final_full_loss = il_loss(&current, demos)?;
    best_full_loss = best_full_loss.min(final_full_loss);
    Ok(PretrainOutcome {
        selected,
        final_policy: current,
        loss_curve,
        initial_full_loss,
        final_full_loss,
        best_full_loss,
        eps_il_proxy: final_full_loss - best_full_loss,
        loss_increased: final_full_loss > initial_full_loss,
        selected_step,
        evals,
    })
}
