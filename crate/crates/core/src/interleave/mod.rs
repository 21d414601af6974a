//! The interleaved IL/RL engine: 1:m scheduling, gradient alignment, dual-cone surgery,
//! residual network separation and the adaptive ratio.

pub mod alignment;
pub mod engine;
pub mod residual;
pub mod schedule;

pub use alignment::{dual_cone_combine, measure_alignment};
pub use engine::{
    cycle_env_steps, planned_cycles, run_inril, run_inril_streaming, BestCheckpoint, CycleRecord, EvalOptions, FinetunePolicy, InrilOutcome,
    InterleaveConfig, Mode, RunOptions, RunStatus, UpdateEvent, UpdateKind,
};
pub use residual::{ResidualPolicyPair, RESIDUAL_SCALE};
pub use schedule::{adaptive_m, balance_rule, round_m, sqrt_rule, sqrt_rule_denominator, Ema, MSpec, RatioConstants, ScheduleState, M_MAX};
