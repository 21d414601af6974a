use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{QuadraticPair, TheoryConstants};
use crate::error::{Error, Result};
use crate::interleave::{adaptive_m, measure_alignment, ScheduleState};
use crate::nnkit::ParamVector;
use crate::seed::{derive_seed, rng_from, stream};

/// Update schedule on the quadratic testbed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    RlOnly,
    Inril(usize),
    /// Square-root rule with exact constants, never below `floor`.
    Adaptive { floor: usize },
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::RlOnly => f.write_str("rl_only"),
            Schedule::Inril(m) => write!(f, "inril({m})"),
            Schedule::Adaptive { floor } => write!(f, "adaptive(floor={floor})"),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rl_only" => Ok(Schedule::RlOnly),
            "adaptive" => Ok(Schedule::Adaptive { floor: 1 }),
            _ => match s.parse::<usize>() {
                Ok(m) if m >= 1 => Ok(Schedule::Inril(m)),
                _ => Err(Error::Usage(format!("schedule must be rl_only, adaptive or a positive m, got '{s}'"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Il,
    Rl,
}

/// State at which one update's gradient was taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub cycle: usize,
    pub kind: StepKind,
    pub theta: Vec<f64>,
    pub loss_rl: f64,
    pub loss_il: f64,
    pub grad_rl_norm: f64,
    pub grad_il_norm: f64,
}

/// Exact quantities at the start of a cycle. For `rl_only` every update is a cycle with
/// `m = 1` and no IL step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleTrace {
    pub cycle: usize,
    pub m: usize,
    pub rho: f64,
    pub grad_il_norm: f64,
    pub grad_rl_norm: f64,
    pub loss_rl: f64,
    /// `max(0, 1 - min_j ||g_rl(theta_{t,j})|| / ||g_rl(theta_t)||)` over the cycle's RL steps.
    pub implied_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLog {
    pub schedule: Schedule,
    pub seed: u64,
    pub steps: Vec<TraceStep>,
    pub cycles: Vec<CycleTrace>,
    pub final_theta: Vec<f64>,
    pub initial_loss_rl: f64,
    pub optimum_rl: f64,
}

impl TraceLog {
    pub fn total_updates(&self) -> usize {
        self.steps.len()
    }

    /// `L_RL * (L_RL(theta_0) - L*_RL)`.
    pub fn scaled_gap(&self, consts: &TheoryConstants) -> f64 {
        consts.l_rl * (self.initial_loss_rl - self.optimum_rl)
    }

    /// Mean RL updates per cycle over the first `t` cycles.
    pub fn m_bar(&self, t: usize) -> f64 {
        let t = t.min(self.cycles.len()).max(1);
        self.cycles[..t].iter().map(|c| c.m as f64).sum::<f64>() / t as f64
    }

    /// `min_{s < t} ||grad L_RL(theta_s)||^2` over cycle starts.
    pub fn min_grad_rl_sq(&self, t: usize) -> f64 {
        self.cycles[..t.min(self.cycles.len())]
            .iter()
            .map(|c| c.grad_rl_norm * c.grad_rl_norm)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_implied_delta(&self) -> f64 {
        self.cycles.iter().map(|c| c.implied_delta).fold(0.0, f64::max)
    }
}

fn pv(v: &DVector<f64>) -> ParamVector {
    ParamVector::from_vec(v.as_slice().to_vec())
}

fn snapshot(pair: &QuadraticPair, theta: &DVector<f64>, cycle: usize, kind: StepKind) -> TraceStep {
    TraceStep {
        cycle,
        kind,
        theta: theta.as_slice().to_vec(),
        loss_rl: pair.loss_rl(theta),
        loss_il: pair.loss_il(theta),
        grad_rl_norm: pair.grad_rl(theta).norm(),
        grad_il_norm: pair.grad_il(theta).norm(),
    }
}

/// Run `t_cycles` cycles of `schedule` from `theta0`, after checking `consts` against the pair.
pub fn run_schedule(
    pair: &QuadraticPair,
    theta0: &DVector<f64>,
    schedule: Schedule,
    t_cycles: usize,
    consts: &TheoryConstants,
    seed: u64,
) -> Result<TraceLog> {
    consts.validate()?;
    consts.check_consistent(pair)?;
    run_schedule_unchecked(pair, theta0, schedule, t_cycles, consts, seed)
}

/// [`run_schedule`] without the consistency check, for deliberately wrong constants.
pub fn run_schedule_unchecked(
    pair: &QuadraticPair,
    theta0: &DVector<f64>,
    schedule: Schedule,
    t_cycles: usize,
    consts: &TheoryConstants,
    seed: u64,
) -> Result<TraceLog> {
    if theta0.len() != pair.dim() {
        return Err(Error::Shape(format!("start has length {}, pair has dimension {}", theta0.len(), pair.dim())));
    }
    if let Schedule::Inril(0) | Schedule::Adaptive { floor: 0 } = schedule {
        return Err(Error::Config("m must be at least 1".into()));
    }
    let mut il_rng = rng_from(derive_seed(seed, stream::THEORY_IL_NOISE, 0));
    let mut rl_rng = rng_from(derive_seed(seed, stream::THEORY_RL_NOISE, 0));
    let (a_il, a_rl) = (consts.alpha_il(), consts.alpha_rl());
    let ratio = consts.ratio_constants();
    let mut sched = ScheduleState::default();
    let mut theta = theta0.clone();
    let mut steps = Vec::new();
    let mut cycles = Vec::with_capacity(t_cycles);

    for cycle in 0..t_cycles {
        let g_rl = pair.grad_rl(&theta);
        let g_il = pair.grad_il(&theta);
        let rho = measure_alignment(&pv(&g_il), &pv(&g_rl));
        let (gi, gr) = (g_il.norm(), g_rl.norm());
        let m = match schedule {
            Schedule::RlOnly => 1,
            Schedule::Inril(m) => m,
            Schedule::Adaptive { floor } => {
                sched.observe(rho, gi, gr);
                adaptive_m(&sched, &ratio, floor)
            }
        };
        let loss_rl = pair.loss_rl(&theta);
        if schedule != Schedule::RlOnly {
            steps.push(snapshot(pair, &theta, cycle, StepKind::Il));
            theta -= pair.noisy_grad_il(&theta, &mut il_rng) * a_il;
        }
        let mut min_norm = f64::INFINITY;
        for _ in 0..m {
            let step = snapshot(pair, &theta, cycle, StepKind::Rl);
            min_norm = min_norm.min(step.grad_rl_norm);
            steps.push(step);
            theta -= pair.noisy_grad_rl(&theta, &mut rl_rng) * a_rl;
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!("iterate became non-finite in cycle {cycle}")));
        }
        let implied_delta = if gr > 0.0 { (1.0 - min_norm / gr).max(0.0) } else { 0.0 };
        sched.finish_cycle(m);
        cycles.push(CycleTrace {
            cycle,
            m,
            rho,
            grad_il_norm: gi,
            grad_rl_norm: gr,
            loss_rl,
            implied_delta,
        });
    }
    Ok(TraceLog {
        schedule,
        seed,
        steps,
        cycles,
        final_theta: theta.as_slice().to_vec(),
        initial_loss_rl: pair.loss_rl(theta0),
        optimum_rl: pair.optimum(),
    })
}
