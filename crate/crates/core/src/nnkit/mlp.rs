use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::param::ParamVector;
use crate::error::{Error, Result};
use crate::seed::rng_from;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn init_gain(self) -> f64 {
        match self {
            Activation::Tanh => 1.0,
            Activation::Relu => std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Linear output is the action mean; a state-independent `log_std` follows the layers.
    GaussianPolicy,
    /// Single linear output read as a state value.
    ScalarValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, head: Head) -> Result<Self> {
        let spec = MlpSpec {
            layer_widths,
            activation,
            head,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Policy spec `obs_dim -> hidden... -> act_dim`.
    pub fn policy(obs_dim: usize, hidden: &[usize], act_dim: usize, activation: Activation) -> Result<Self> {
        let mut w = vec![obs_dim];
        w.extend_from_slice(hidden);
        w.push(act_dim);
        MlpSpec::new(w, activation, Head::GaussianPolicy)
    }

    /// Value spec `obs_dim -> hidden... -> 1`.
    pub fn value(obs_dim: usize, hidden: &[usize], activation: Activation) -> Result<Self> {
        let mut w = vec![obs_dim];
        w.extend_from_slice(hidden);
        w.push(1);
        MlpSpec::new(w, activation, Head::ScalarValue)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 3 {
            return Err(Error::Config(
                "an MLP needs an input width, at least one hidden layer and an output width".into(),
            ));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.head == Head::ScalarValue && self.output_dim() != 1 {
            return Err(Error::Config("scalar_value head needs output width 1".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated")
    }

    fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    /// Parameters of the dense layers only.
    pub fn n_layer_params(&self) -> usize {
        self.layer_widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn n_params(&self) -> usize {
        self.n_layer_params()
            + match self.head {
                Head::GaussianPolicy => self.output_dim(),
                Head::ScalarValue => 0,
            }
    }

    /// `(weight offset, bias offset)` of layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.layer_widths.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        let (fan_in, fan_out) = (self.layer_widths[l], self.layer_widths[l + 1]);
        (off, off + fan_in * fan_out)
    }
}

/// Dense feed-forward network with a hand-written backward pass.
///
/// Parameter layout, layer by layer: weights (row-major, `out x in`), then biases; for a
/// Gaussian head the per-dimension `log_std` comes last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: ParamVector,
}

/// Intermediate values of one forward pass.
struct Trace {
    /// Layer inputs; `inputs[l]` feeds layer `l`.
    inputs: Vec<Vec<f64>>,
    /// Hidden pre-activations.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Mlp {
    /// Seeded scaled-uniform init: `U(-g/sqrt(fan_in), g/sqrt(fan_in))`, zero biases.
    pub fn new(spec: MlpSpec, seed: u64, init_log_std: f64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from(seed);
        let mut values = Vec::with_capacity(spec.n_params());
        let gain = spec.activation.init_gain();
        for w in spec.layer_widths.windows(2) {
            let bound = gain / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                values.push(rng.random_range(-bound..bound));
            }
            values.extend(std::iter::repeat_n(0.0, w[1]));
        }
        if spec.head == Head::GaussianPolicy {
            let ls = init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX);
            values.extend(std::iter::repeat_n(ls, spec.output_dim()));
        }
        Ok(Mlp {
            spec,
            params: ParamVector::from_vec(values),
        })
    }

    pub fn from_params(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.n_params() {
            return Err(Error::Shape(format!(
                "spec needs {} parameters, got {}",
                spec.n_params(),
                params.len()
            )));
        }
        if !params.is_finite() {
            return Err(Error::Numeric("parameters contain non-finite values".into()));
        }
        let mut net = Mlp { spec, params };
        net.clamp_log_std();
        Ok(net)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// Replace parameters. Lengths must match; `log_std` is re-clamped.
    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        self.clamp_log_std();
        Ok(())
    }

    /// Mutable access to the raw parameters. Callers re-clamp with [`Mlp::clamp_log_std`].
    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    /// `params <- params - step * grad`, then clamp `log_std`.
    pub fn apply_step(&mut self, grad: &ParamVector, step: f64) -> Result<()> {
        self.params = self.params.axpy_update(grad, step)?;
        self.clamp_log_std();
        Ok(())
    }

    pub fn clamp_log_std(&mut self) {
        if self.spec.head == Head::GaussianPolicy {
            let start = self.spec.n_layer_params();
            for v in &mut self.params.as_mut_slice()[start..] {
                *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
            }
        }
    }

    pub fn log_std(&self) -> &[f64] {
        match self.spec.head {
            Head::GaussianPolicy => &self.params.as_slice()[self.spec.n_layer_params()..],
            Head::ScalarValue => &[],
        }
    }

    pub fn log_std_offset(&self) -> usize {
        self.spec.n_layer_params()
    }

    fn check_input(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.spec.input_dim() {
            return Err(Error::Shape(format!(
                "observation has length {}, network expects {}",
                obs.len(),
                self.spec.input_dim()
            )));
        }
        Ok(())
    }

    fn require_head(&self, head: Head) -> Result<()> {
        if self.spec.head != head {
            return Err(Error::Config(format!(
                "operation needs a {head:?} head, network has {:?}",
                self.spec.head
            )));
        }
        Ok(())
    }

    fn trace(&self, obs: &[f64]) -> Trace {
        let p = self.params.as_slice();
        let n_layers = self.spec.n_layers();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers - 1);
        let mut x = obs.to_vec();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.spec.layer_widths[l], self.spec.layer_widths[l + 1]);
            let (wo, bo) = self.spec.offsets(l);
            let mut z = p[bo..bo + fan_out].to_vec();
            for (j, zj) in z.iter_mut().enumerate() {
                let row = &p[wo + j * fan_in..wo + (j + 1) * fan_in];
                *zj += row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>();
            }
            inputs.push(x);
            if l + 1 < n_layers {
                x = z.iter().map(|&v| self.spec.activation.apply(v)).collect();
                pre.push(z);
            } else {
                x = z;
            }
        }
        Trace {
            inputs,
            pre,
            output: x,
        }
    }

    /// Accumulate `weight * d(output)/d(params) . d_out` into `grad`.
    fn backward(&self, trace: &Trace, d_out: &[f64], weight: f64, grad: &mut [f64]) {
        let p = self.params.as_slice();
        let n_layers = self.spec.n_layers();
        let mut delta: Vec<f64> = d_out.iter().map(|d| d * weight).collect();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.spec.layer_widths[l], self.spec.layer_widths[l + 1]);
            let (wo, bo) = self.spec.offsets(l);
            let input = &trace.inputs[l];
            for j in 0..fan_out {
                let dj = delta[j];
                grad[bo + j] += dj;
                if dj != 0.0 {
                    let g_row = &mut grad[wo + j * fan_in..wo + (j + 1) * fan_in];
                    for (g, xi) in g_row.iter_mut().zip(input) {
                        *g += dj * xi;
                    }
                }
            }
            if l > 0 {
                let z = &trace.pre[l - 1];
                let a = &trace.inputs[l];
                let mut prev = vec![0.0; fan_in];
                for (j, dj) in delta.iter().enumerate() {
                    let row = &p[wo + j * fan_in..wo + (j + 1) * fan_in];
                    for (pv, w) in prev.iter_mut().zip(row) {
                        *pv += w * dj;
                    }
                }
                for ((pv, &zi), &ai) in prev.iter_mut().zip(z).zip(a) {
                    *pv *= self.spec.activation.derivative(zi, ai);
                }
                delta = prev;
            }
        }
    }

    /// Raw linear output of the last layer.
    pub fn forward_raw(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_input(obs)?;
        Ok(self.trace(obs).output)
    }

    /// Gaussian policy head: `(mean, std)` with `std = exp(log_std)`.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.require_head(Head::GaussianPolicy)?;
        let mean = self.forward_raw(obs)?;
        let std = self.log_std().iter().map(|l| l.exp()).collect();
        Ok((mean, std))
    }

    /// `log pi(action | obs)` for the diagonal Gaussian head.
    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let (mean, _) = self.forward(obs)?;
        check_action(action, mean.len())?;
        Ok(gaussian_log_prob(&mean, self.log_std(), action))
    }

    /// `log pi(action | obs)` and its gradient with respect to all parameters.
    pub fn log_prob_and_grad(&self, obs: &[f64], action: &[f64]) -> Result<(f64, ParamVector)> {
        let mut grad = ParamVector::zeros(self.n_params());
        let lp = self.accumulate_log_prob_grad(obs, action, 1.0, grad.as_mut_slice())?;
        Ok((lp, grad))
    }

    /// Adds `weight * grad log pi(action | obs)` into `grad` and returns `log pi`.
    pub fn accumulate_log_prob_grad(
        &self,
        obs: &[f64],
        action: &[f64],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.require_head(Head::GaussianPolicy)?;
        self.check_input(obs)?;
        check_action(action, self.out_dim())?;
        if obs.iter().chain(action).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite observation or action".into()));
        }
        let trace = self.trace(obs);
        let log_std = self.log_std();
        let (lp, d_mean, d_log_std) = gaussian_log_prob_grads(&trace.output, log_std, action);
        self.backward(&trace, &d_mean, weight, grad);
        let off = self.log_std_offset();
        for (g, d) in grad[off..].iter_mut().zip(&d_log_std) {
            *g += weight * d;
        }
        Ok(lp)
    }

    /// Adds `weight * (d mean / d params)^T d_mean` into `grad`; used when a caller has
    /// already formed the derivative of its loss with respect to this network's mean output.
    pub fn accumulate_mean_vjp(&self, obs: &[f64], d_mean: &[f64], weight: f64, grad: &mut [f64]) -> Result<Vec<f64>> {
        self.check_input(obs)?;
        let trace = self.trace(obs);
        self.backward(&trace, d_mean, weight, grad);
        Ok(trace.output)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        self.require_head(Head::ScalarValue)?;
        Ok(self.forward_raw(obs)?[0])
    }

    /// Loss `0.5 (V(s) - target)^2` and its gradient.
    pub fn value_forward_and_grad(&self, obs: &[f64], target: f64) -> Result<(f64, ParamVector)> {
        let mut grad = ParamVector::zeros(self.n_params());
        let loss = self.accumulate_value_grad(obs, target, 1.0, grad.as_mut_slice())?;
        Ok((loss, grad))
    }

    pub fn accumulate_value_grad(&self, obs: &[f64], target: f64, weight: f64, grad: &mut [f64]) -> Result<f64> {
        self.require_head(Head::ScalarValue)?;
        self.check_input(obs)?;
        if !target.is_finite() {
            return Err(Error::Numeric("non-finite value target".into()));
        }
        let trace = self.trace(obs);
        let err = trace.output[0] - target;
        self.backward(&trace, &[err], weight, grad);
        Ok(0.5 * err * err)
    }
}

fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::Shape(format!(
            "action has length {}, policy produces {dim}",
            action.len()
        )));
    }
    Ok(())
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian log-density.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    debug_assert!((HALF_LN_2PI - 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// Log-density plus its partials with respect to the mean and `log_std`.
pub fn gaussian_log_prob_grads(mean: &[f64], log_std: &[f64], action: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let k = mean.len();
    let mut lp = 0.0;
    let mut d_mean = Vec::with_capacity(k);
    let mut d_ls = Vec::with_capacity(k);
    for ((m, ls), a) in mean.iter().zip(log_std).zip(action) {
        let inv_std = (-ls).exp();
        let z = (a - m) * inv_std;
        lp += -0.5 * z * z - ls - HALF_LN_2PI;
        d_mean.push(z * inv_std);
        d_ls.push(z * z - 1.0);
    }
    (lp, d_mean, d_ls)
}
