//! Command implementations behind the `inril` CLI: configuration, run logs, pretraining,
//! fine-tuning, m-sweeps, theory checks and plots.

mod commands;
mod config;
mod plot;
mod runlog;
mod sweep;

pub use commands::{
    cmd_finetune, cmd_gen_demos, cmd_pretrain, cmd_theory_check, file_sha256, init_policy, output_root, CheckpointMetrics,
    FinetuneArgs, FinetuneInit, FinetuneSummary, PretrainArgs, PretrainSummary, BEST_CKPT, FINAL_CKPT, FINETUNE_LOG,
    LAST_CKPT, OUT_ENV, PRETRAIN_LOG, SUMMARY,
};
pub use config::{DemoSection, IlSection, NetworkSection, RlSection, RunConfig};
pub use plot::{cmd_plot, savitzky_golay, CurveRow, PlotOutputs, SmoothingSpec};
pub use runlog::{LogHeader, LogRecord, RunLog, RunLogWriter, LOG_FORMAT};
pub use sweep::{
    cmd_sweep_m, double_descent, normalized_auc, summarize_sweep, GroupRow, MValue, RunRow, SweepArgs, SweepCell,
    SweepSpec, SweepSummary, DOUBLE_DESCENT_DROP, FAILURE_MARKER,
};
