use super::mlp::Mlp;
use super::param::ParamVector;
use crate::error::Result;

/// A Gaussian policy whose log-density gradient lives in some trainable parameter space.
///
/// For a plain [`Mlp`] that space is all of its parameters. Composite policies decide
/// which of their parameters the gradient covers.
pub trait StochasticPolicy {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    /// Length of gradients produced by [`StochasticPolicy::accumulate_log_prob_grad`].
    fn n_trainable(&self) -> usize;
    fn mean_std(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
    fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64>;
    /// Adds `weight * grad log pi(action | obs)` into `grad` and returns `log pi`.
    fn accumulate_log_prob_grad(&self, obs: &[f64], action: &[f64], weight: f64, grad: &mut [f64]) -> Result<f64>;
    /// `trainable <- trainable - lr * grad`.
    fn apply_step(&mut self, grad: &ParamVector, lr: f64) -> Result<()>;
}

impl StochasticPolicy for Mlp {
    fn obs_dim(&self) -> usize {
        Mlp::obs_dim(self)
    }

    fn act_dim(&self) -> usize {
        self.out_dim()
    }

    fn n_trainable(&self) -> usize {
        self.n_params()
    }

    fn mean_std(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.forward(obs)
    }

    fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        Mlp::log_prob(self, obs, action)
    }

    fn accumulate_log_prob_grad(&self, obs: &[f64], action: &[f64], weight: f64, grad: &mut [f64]) -> Result<f64> {
        Mlp::accumulate_log_prob_grad(self, obs, action, weight, grad)
    }

    fn apply_step(&mut self, grad: &ParamVector, lr: f64) -> Result<()> {
        Mlp::apply_step(self, grad, lr)
    }
}
