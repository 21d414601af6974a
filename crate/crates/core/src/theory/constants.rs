use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::QuadraticPair;
use crate::error::{Error, Result};
use crate::interleave::RatioConstants;

/// Tolerance for matching declared smoothness constants against computed eigenvalues.
pub const L_MATCH_TOL: f64 = 1e-9;

/// Constants the convergence bounds are evaluated with. Learning rates are `c / L`.
///
/// `sigma2_*` is the total gradient-noise variance at batch size one, so a batch of `N`
/// has `E||g_hat - g||^2 = sigma2 / N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConstants {
    pub c_il: f64,
    pub c_rl: f64,
    pub l_il: f64,
    pub l_rl: f64,
    pub sigma2_il: f64,
    pub sigma2_rl: f64,
    pub n_il: usize,
    pub n_rl: usize,
    pub eps_il: f64,
    /// Intermediate-step slack; the first bound term is divided by `(1 - delta)^2`.
    #[serde(default)]
    pub delta: f64,
}

impl TheoryConstants {
    /// Exact constants of `pair` started at `theta0`.
    pub fn exact(pair: &QuadraticPair, theta0: &DVector<f64>, c_il: f64, c_rl: f64) -> Result<Self> {
        let k = TheoryConstants {
            c_il,
            c_rl,
            l_il: pair.l_il(),
            l_rl: pair.l_rl(),
            sigma2_il: pair.sigma2_il(),
            sigma2_rl: pair.sigma2_rl(),
            n_il: pair.n_il,
            n_rl: pair.n_rl,
            eps_il: pair.loss_il(theta0) - pair.optimum(),
            delta: 0.0,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |c: f64| c > 0.0 && c < 1.0;
        if !unit(self.c_il) || !unit(self.c_rl) {
            return Err(Error::Config(format!("c_il and c_rl must lie in (0, 1), got {} and {}", self.c_il, self.c_rl)));
        }
        if !(self.l_il > 0.0 && self.l_rl > 0.0) {
            return Err(Error::Config("smoothness constants must be positive".into()));
        }
        if !(self.sigma2_il >= 0.0 && self.sigma2_rl >= 0.0 && self.eps_il >= 0.0) {
            return Err(Error::Config("variances and eps_il must be non-negative".into()));
        }
        if self.n_il == 0 || self.n_rl == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Config(format!("delta must lie in [0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    /// Error unless the declared `L` values match the pair's largest eigenvalues.
    pub fn check_consistent(&self, pair: &QuadraticPair) -> Result<()> {
        for (name, declared, actual) in [("L_IL", self.l_il, pair.l_il()), ("L_RL", self.l_rl, pair.l_rl())] {
            if (declared - actual).abs() > L_MATCH_TOL * actual.max(1.0) {
                return Err(Error::Config(format!("{name} = {declared} does not match the largest eigenvalue {actual}")));
            }
        }
        Ok(())
    }

    pub fn alpha_il(&self) -> f64 {
        self.c_il / self.l_il
    }

    pub fn alpha_rl(&self) -> f64 {
        self.c_rl / self.l_rl
    }

    /// Noise floor of the RL-only bound, `c sigma^2 / ((1 - c/2) N)`.
    pub fn rl_noise_floor(&self) -> f64 {
        self.c_rl * self.sigma2_rl / ((1.0 - self.c_rl / 2.0) * self.n_rl as f64)
    }

    pub fn ratio_constants(&self) -> RatioConstants {
        RatioConstants {
            c_il: self.c_il,
            c_rl: self.c_rl,
            l_il: self.l_il,
            l_rl: self.l_rl,
            il_noise: self.sigma2_il / self.n_il as f64,
        }
    }
}
