use crate::error::{Error, Result};
use crate::nnkit::mlp::gaussian_log_prob_grads;
use crate::nnkit::{Activation, Mlp, MlpSpec, ParamVector, StochasticPolicy};

/// Weight of the residual network's output in the composite action mean.
pub const RESIDUAL_SCALE: f64 = 0.1;

/// Base policy plus a small additive residual.
///
/// The composite acts with mean `base_mean + 0.1 * residual_mean` and the residual's
/// `log_std`. As a [`StochasticPolicy`] its trainable space is the residual's parameters
/// only, so RL steps never touch the base. IL steps are applied to `base` directly.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualPolicyPair {
    pub base: Mlp,
    pub residual: Mlp,
}

impl ResidualPolicyPair {
    /// Fresh residual with zero final-layer weights and the base's `log_std`, so the
    /// composite initially equals the base policy.
    pub fn new(base: Mlp, hidden: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let spec = MlpSpec::policy(base.obs_dim(), hidden, base.out_dim(), activation)?;
        let mut residual = Mlp::new(spec, seed, 0.0)?;
        let n_layers = residual.log_std_offset();
        let last_in = hidden[hidden.len() - 1];
        let last_block = last_in * base.out_dim() + base.out_dim();
        let log_std = base.log_std().to_vec();
        {
            let p = residual.params_mut().as_mut_slice();
            p[n_layers - last_block..n_layers].iter_mut().for_each(|v| *v = 0.0);
            p[n_layers..].copy_from_slice(&log_std);
        }
        Ok(ResidualPolicyPair { base, residual })
    }

    pub fn from_parts(base: Mlp, residual: Mlp) -> Result<Self> {
        if base.obs_dim() != residual.obs_dim() || base.out_dim() != residual.out_dim() {
            return Err(Error::Shape("base and residual dimensions differ".into()));
        }
        Ok(ResidualPolicyPair { base, residual })
    }

    /// Both networks' parameters, base first.
    pub fn joint_params(&self) -> ParamVector {
        self.base.params().concat(self.residual.params())
    }
}

impl StochasticPolicy for ResidualPolicyPair {
    fn obs_dim(&self) -> usize {
        self.base.obs_dim()
    }

    fn act_dim(&self) -> usize {
        self.base.out_dim()
    }

    fn n_trainable(&self) -> usize {
        self.residual.n_params()
    }

    fn mean_std(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let base = self.base.forward_raw(obs)?;
        let res = self.residual.forward_raw(obs)?;
        let mean = base.iter().zip(&res).map(|(b, r)| b + RESIDUAL_SCALE * r).collect();
        let std = self.residual.log_std().iter().map(|l| l.exp()).collect();
        Ok((mean, std))
    }

    fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let (mean, _) = self.mean_std(obs)?;
        if action.len() != mean.len() {
            return Err(Error::Shape(format!("action has length {}, policy produces {}", action.len(), mean.len())));
        }
        Ok(crate::nnkit::mlp::gaussian_log_prob(&mean, self.residual.log_std(), action))
    }

    fn accumulate_log_prob_grad(&self, obs: &[f64], action: &[f64], weight: f64, grad: &mut [f64]) -> Result<f64> {
        if obs.iter().chain(action).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite observation or action".into()));
        }
        let (mean, _) = self.mean_std(obs)?;
        if action.len() != mean.len() {
            return Err(Error::Shape(format!("action has length {}, policy produces {}", action.len(), mean.len())));
        }
        let log_std = self.residual.log_std();
        let (lp, d_mean, d_ls) = gaussian_log_prob_grads(&mean, log_std, action);
        self.residual.accumulate_mean_vjp(obs, &d_mean, weight * RESIDUAL_SCALE, grad)?;
        let off = self.residual.log_std_offset();
        for (g, d) in grad[off..].iter_mut().zip(&d_ls) {
            *g += weight * d;
        }
        Ok(lp)
    }

    fn apply_step(&mut self, grad: &ParamVector, lr: f64) -> Result<()> {
        self.residual.apply_step(grad, lr)
    }
}
