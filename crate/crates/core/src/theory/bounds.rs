use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{QuadraticPair, Schedule, TheoryConstants, TraceLog};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, stream};

/// Hard cap on parameter updates in [`empirical_update_counts`].
pub const MAX_UPDATES: u64 = 1_000_000;

/// RL-only bound after `t` updates:
/// `2 L gap / (c (1 - c/2) t) + c sigma^2 / ((1 - c/2) N)` with `scaled_gap = L (L(theta_0) - L*)`.
pub fn covrl_bound(k: &TheoryConstants, scaled_gap: f64, t: usize) -> f64 {
    let c = k.c_rl;
    2.0 * scaled_gap / (c * (1.0 - c / 2.0) * t as f64) + k.rl_noise_floor()
}

/// Interleaved bound after `t` cycles with mean ratio `m_bar`:
/// `2 (L gap - Delta) / (c (1 - c/2) m_bar t (1 - delta)^2) + c sigma^2 / ((1 - c/2) N)`.
pub fn covint_bound(k: &TheoryConstants, scaled_gap: f64, delta_il_rl: f64, m_bar: f64, t: usize) -> f64 {
    let c = k.c_rl;
    let slack = (1.0 - k.delta).powi(2);
    2.0 * (scaled_gap - delta_il_rl) / (c * (1.0 - c / 2.0) * m_bar * t as f64 * slack) + k.rl_noise_floor()
}

/// Regularization benefit over the first `t` cycles of an interleaved trace:
/// `-sum_t c_IL rho_t / L_IL ||g_il|| ||g_rl|| - c_IL^2 sigma_IL^2 t / (2 L_IL N_IL)`.
pub fn delta_il_rl_prefix(trace: &TraceLog, k: &TheoryConstants, t: usize) -> Result<f64> {
    if trace.schedule == Schedule::RlOnly {
        return Err(Error::Usage("an rl_only trace has no IL steps to measure".into()));
    }
    if trace.cycles.is_empty() || t > trace.cycles.len() {
        return Err(Error::Usage(format!("trace has {} cycles, {t} requested", trace.cycles.len())));
    }
    let interaction: f64 = trace.cycles[..t]
        .iter()
        .map(|c| k.c_il * c.rho / k.l_il * c.grad_il_norm * c.grad_rl_norm)
        .sum();
    let noise = k.c_il * k.c_il * k.sigma2_il * t as f64 / (2.0 * k.l_il * k.n_il as f64);
    Ok(-interaction - noise)
}

/// [`delta_il_rl_prefix`] over the whole trace.
pub fn delta_il_rl(trace: &TraceLog, k: &TheoryConstants) -> Result<f64> {
    delta_il_rl_prefix(trace, k, trace.cycles.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    /// `T_rl_only / T_interleaved` in parameter updates.
    pub ratio: f64,
    /// `Delta / (L gap)`.
    pub beta: f64,
}

/// `(m / (1 + m)) * G / (G - Delta)` with `G = L (L(theta_0) - L*)`.
pub fn efficiency_ratio(m: f64, delta_il_rl: f64, scaled_gap: f64) -> Result<Efficiency> {
    if !(m > 0.0) || !(scaled_gap > 0.0) {
        return Err(Error::Domain(format!("need m > 0 and a positive gap, got m = {m}, gap = {scaled_gap}")));
    }
    let den = scaled_gap - delta_il_rl;
    if !(den > 0.0) {
        return Err(Error::Domain(format!(
            "regularization benefit {delta_il_rl} is not below the total gap {scaled_gap}"
        )));
    }
    Ok(Efficiency {
        ratio: m / (1.0 + m) * scaled_gap / den,
        beta: delta_il_rl / scaled_gap,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCondition {
    pub holds: bool,
    /// `Delta`.
    pub lhs: f64,
    /// `L (L(theta_0) - L*) / (m + 1)`.
    pub rhs: f64,
    pub margin: f64,
}

/// Whether the measured benefit exceeds `L (L(theta_0) - L*) / (m + 1)`.
pub fn check_efficiency_condition(trace: &TraceLog, k: &TheoryConstants, m: f64) -> Result<EfficiencyCondition> {
    let lhs = delta_il_rl(trace, k)?;
    let rhs = trace.scaled_gap(k) / (m + 1.0);
    Ok(EfficiencyCondition {
        holds: lhs > rhs,
        lhs,
        rhs,
        margin: lhs - rhs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateCounts {
    pub rl_only: u64,
    pub inril_total: u64,
}

/// Total updates until the exact `||grad L_RL||^2` at a cycle start first drops to
/// `epsilon`, for RL-only and for a fixed `1:m` schedule sharing the noise seed.
pub fn empirical_update_counts(
    pair: &QuadraticPair,
    theta0: &DVector<f64>,
    k: &TheoryConstants,
    m: usize,
    epsilon: f64,
    seed: u64,
) -> Result<UpdateCounts> {
    k.validate()?;
    k.check_consistent(pair)?;
    if m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    let floor = k.rl_noise_floor();
    if !(epsilon > floor) {
        return Err(Error::BudgetExceeded(format!("target {epsilon:e} is not above the RL noise floor {floor:e}")));
    }
    Ok(UpdateCounts {
        rl_only: count_updates(pair, theta0, k, None, epsilon, seed)?,
        inril_total: count_updates(pair, theta0, k, Some(m), epsilon, seed)?,
    })
}

fn count_updates(
    pair: &QuadraticPair,
    theta0: &DVector<f64>,
    k: &TheoryConstants,
    m: Option<usize>,
    epsilon: f64,
    seed: u64,
) -> Result<u64> {
    let mut il_rng = rng_from(derive_seed(seed, stream::THEORY_IL_NOISE, 0));
    let mut rl_rng = rng_from(derive_seed(seed, stream::THEORY_RL_NOISE, 0));
    let mut theta = theta0.clone();
    let mut updates = 0u64;
    loop {
        if pair.grad_rl(&theta).norm_squared() <= epsilon {
            return Ok(updates);
        }
        if updates >= MAX_UPDATES {
            return Err(Error::BudgetExceeded(format!("target {epsilon:e} not reached within {MAX_UPDATES} updates")));
        }
        let rl_steps = match m {
            Some(m) => {
                theta -= pair.noisy_grad_il(&theta, &mut il_rng) * k.alpha_il();
                updates += 1;
                m
            }
            None => 1,
        };
        for _ in 0..rl_steps {
            theta -= pair.noisy_grad_rl(&theta, &mut rl_rng) * k.alpha_rl();
        }
        updates += rl_steps as u64;
    }
}

/// Fixed point of one cycle on the 1-D pair with IL target 0, RL target 1, unit curvature and a
/// shared step `alpha`: `(1 - (1 - alpha)^m) / (1 - (1 - alpha)^(m + 1))`.
pub fn fixed_point_1d(alpha: f64, m: usize) -> f64 {
    let q = 1.0 - alpha;
    (1.0 - q.powi(m as i32)) / (1.0 - q.powi(m as i32 + 1))
}
