use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const M_MAX: usize = 50;
pub const EMA_WINDOW: usize = 20;

/// Number of RL updates per IL update: fixed, or chosen each cycle by the square-root rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MSpec {
    Fixed(usize),
    Adaptive,
}

impl fmt::Display for MSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MSpec::Fixed(m) => write!(f, "{m}"),
            MSpec::Adaptive => f.write_str("adaptive"),
        }
    }
}

impl FromStr for MSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "adaptive" {
            return Ok(MSpec::Adaptive);
        }
        match s.parse::<usize>() {
            Ok(m) if m >= 1 => Ok(MSpec::Fixed(m)),
            _ => Err(Error::Config(format!("m must be a positive integer or \"adaptive\", got '{s}'"))),
        }
    }
}

impl Serialize for MSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MSpec::Fixed(m) => s.serialize_u64(*m as u64),
            MSpec::Adaptive => s.serialize_str("adaptive"),
        }
    }
}

impl<'de> Deserialize<'de> for MSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(m) if m >= 1 => Ok(MSpec::Fixed(m as usize)),
            Raw::Int(m) => Err(serde::de::Error::custom(format!("m must be >= 1, got {m}"))),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Exponential moving average with `alpha = 2 / (window + 1)`, seeded by its first sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Ema {
    value: Option<f64>,
}

impl Ema {
    pub const ALPHA: f64 = 2.0 / (EMA_WINDOW as f64 + 1.0);

    pub fn update(&mut self, x: f64) -> f64 {
        let v = match self.value {
            None => x,
            Some(prev) => prev + Self::ALPHA * (x - prev),
        };
        self.value = Some(v);
        v
    }

    pub fn get(&self) -> Option<f64> {
        self.value
    }
}

/// Constants entering the ratio rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioConstants {
    pub c_il: f64,
    pub c_rl: f64,
    pub l_il: f64,
    pub l_rl: f64,
    /// `sigma_IL^2 / N_IL`.
    pub il_noise: f64,
}

/// Denominator of the square-root rule:
/// `rho ||g_il|| ||g_rl|| - c_IL L_RL sigma_IL^2 / (2 L_IL^2 N_IL)`.
pub fn sqrt_rule_denominator(rho: f64, g_il_norm: f64, g_rl_norm: f64, k: &RatioConstants) -> f64 {
    rho * g_il_norm * g_rl_norm - k.c_il * k.l_rl * k.il_noise / (2.0 * k.l_il * k.l_il)
}

/// `max{1, sqrt(||g_rl||^2 / denominator)}`, or `None` when the denominator is not positive.
pub fn sqrt_rule(g_rl_norm_sq: f64, denominator: f64) -> Option<f64> {
    if denominator > 0.0 {
        Some((g_rl_norm_sq / denominator).sqrt().max(1.0))
    } else {
        None
    }
}

/// Round to nearest and clamp to `[floor, M_MAX]`; `None` maps to `floor`.
pub fn round_m(raw: Option<f64>, floor: usize) -> usize {
    match raw {
        Some(x) if x.is_finite() => (x.round() as usize).clamp(floor.max(1), M_MAX),
        Some(_) => M_MAX,
        None => floor.max(1),
    }
}

/// Ratio from equating one cycle's RL progress with the IL step's interference:
/// `(c_IL/L_IL rho ||g_il|| ||g_rl|| + L_RL c_IL^2 sigma_IL^2 / (2 L_IL^2 N_IL))
///  / (c_RL (1 - c_RL/2) / L_RL ||g_rl||^2)`.
pub fn balance_rule(rho: f64, g_il_norm: f64, g_rl_norm: f64, k: &RatioConstants) -> f64 {
    let num = k.c_il / k.l_il * rho * g_il_norm * g_rl_norm + k.l_rl * k.c_il * k.c_il * k.il_noise / (2.0 * k.l_il * k.l_il);
    let den = k.c_rl * (1.0 - k.c_rl / 2.0) / k.l_rl * g_rl_norm * g_rl_norm;
    num / den
}

/// Cycle-level bookkeeping shared by the MDP engine and the quadratic testbed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScheduleState {
    pub cycle: usize,
    pub updates_done: usize,
    pub rho_history: Vec<(usize, f64)>,
    pub grad_norms: Vec<(f64, f64)>,
    pub m_history: Vec<usize>,
    pub ema_g_il: Ema,
    pub ema_g_rl: Ema,
    pub ema_rho: Ema,
}

impl ScheduleState {
    /// Record one cycle's measurements and update the smoothed values.
    pub fn observe(&mut self, rho: f64, g_il_norm: f64, g_rl_norm: f64) {
        debug_assert!((-1.0..=1.0).contains(&rho));
        self.rho_history.push((self.cycle, rho));
        self.grad_norms.push((g_il_norm, g_rl_norm));
        self.ema_rho.update(rho);
        self.ema_g_il.update(g_il_norm);
        self.ema_g_rl.update(g_rl_norm);
    }

    pub fn finish_cycle(&mut self, m: usize) {
        self.m_history.push(m);
        self.updates_done += 1 + m;
        self.cycle += 1;
    }

    /// Smoothed `(rho, ||g_il||, ||g_rl||)`, once at least one cycle was observed.
    pub fn smoothed(&self) -> Option<(f64, f64, f64)> {
        Some((self.ema_rho.get()?, self.ema_g_il.get()?, self.ema_g_rl.get()?))
    }
}

/// Square-root rule on the smoothed state. Returns `floor` before any observation or
/// whenever the denominator is not positive.
pub fn adaptive_m(state: &ScheduleState, k: &RatioConstants, floor: usize) -> usize {
    match state.smoothed() {
        Some((rho, gi, gr)) => round_m(sqrt_rule(gr * gr, sqrt_rule_denominator(rho, gi, gr, k)), floor),
        None => floor.max(1),
    }
}
