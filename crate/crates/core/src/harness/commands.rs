use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::runlog::{LogHeader, LogRecord, RunLogWriter};
use crate::envs::{generate_demos, DemoDataset};
use crate::error::{Error, Result};
use crate::il::{pretrain, il_loss, PretrainOptions};
use crate::interleave::{run_inril_streaming, FinetunePolicy, InrilOutcome, RunStatus};
use crate::nnkit::{Checkpoint, Mlp};
use crate::rl::{evaluate, EvalStats};
use crate::seed::{derive_seed, stream};
use crate::theory::{run_check_suite, CheckReport, SuiteConfig};

/// Environment variable naming the root directory for command outputs.
pub const OUT_ENV: &str = "INRIL_OUT";

pub const PRETRAIN_LOG: &str = "pretrain.ndjson";
pub const FINETUNE_LOG: &str = "finetune.ndjson";
pub const BEST_CKPT: &str = "best.ckpt";
pub const LAST_CKPT: &str = "last.ckpt";
pub const FINAL_CKPT: &str = "final.ckpt";
pub const SUMMARY: &str = "summary.json";

/// `$INRIL_OUT`, or `runs` when unset.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(format!("cannot serialize: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Numeric(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn header_config(cfg: &RunConfig, inputs: serde_json::Value) -> serde_json::Value {
    serde_json::json!({ "run": cfg.resolved(), "inputs": inputs })
}

/// Generate expert demonstrations and write them to `out`.
pub fn cmd_gen_demos(cfg: &RunConfig, out: &Path, force: bool) -> Result<DemoDataset> {
    cfg.validate()?;
    if out.exists() && !force {
        return Err(Error::Usage(format!("{} exists; pass --force to overwrite", out.display())));
    }
    let demos = generate_demos(&cfg.env_config(), cfg.demo_count(), cfg.demos.noise, cfg.demo_seed())?;
    demos.save(out)?;
    Ok(demos)
}

fn load_demos(cfg: &RunConfig, path: &Path) -> Result<DemoDataset> {
    let demos = DemoDataset::load(path)?;
    if demos.env != cfg.env {
        return Err(Error::Config(format!(
            "{} holds {} demonstrations but the config selects {}",
            path.display(),
            demos.env,
            cfg.env
        )));
    }
    Ok(demos)
}

/// Freshly initialized policy for `cfg`.
pub fn init_policy(cfg: &RunConfig) -> Result<Mlp> {
    Mlp::new(cfg.policy_spec()?, derive_seed(cfg.seed, stream::INIT_POLICY, 0), cfg.network.init_log_std)
}

fn load_policy(cfg: &RunConfig, path: &Path) -> Result<(Mlp, u64)> {
    let ck = Checkpoint::load(path)?;
    let policy = ck.require("policy")?.clone();
    if policy.spec() != &cfg.policy_spec()? {
        return Err(Error::Config(format!(
            "{}: policy architecture does not match the configured network",
            path.display()
        )));
    }
    Ok((policy, ck.step))
}

#[derive(Clone, Debug)]
pub struct PretrainArgs {
    pub demos: PathBuf,
    pub out_dir: PathBuf,
    /// Overrides `il.pretrain_steps`.
    pub steps: Option<u64>,
    /// Continue from `out_dir/last.ckpt`, appending to the existing log.
    pub resume: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub first_step: u64,
    pub end_step: u64,
    pub initial_il_loss: f64,
    pub final_il_loss: f64,
    pub best_step: u64,
    pub best_eval: EvalStats,
    pub final_eval: EvalStats,
}

/// Behavior-cloning pretraining with periodic evaluation. Writes the loss curve to
/// `pretrain.ndjson`, the best-evaluated and the last policy to `best.ckpt` / `last.ckpt`,
/// and a `summary.json`.
pub fn cmd_pretrain(cfg: &RunConfig, args: &PretrainArgs) -> Result<PretrainSummary> {
    cfg.validate()?;
    let demos = load_demos(cfg, &args.demos)?;
    let env = cfg.env_config();
    let log_path = args.out_dir.join(PRETRAIN_LOG);
    let last_path = args.out_dir.join(LAST_CKPT);
    let best_path = args.out_dir.join(BEST_CKPT);
    let summary_path = args.out_dir.join(SUMMARY);

    let (start, start_step, previous) = if args.resume {
        let (policy, step) = load_policy(cfg, &last_path)?;
        let prev: Option<PretrainSummary> = std::fs::read_to_string(&summary_path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        (policy, step, prev)
    } else {
        (init_policy(cfg)?, 0, None)
    };
    let mut log = if args.resume && log_path.exists() {
        RunLogWriter::append(&log_path)?
    } else {
        let inputs = serde_json::json!({ "demos": args.demos, "demos_sha256": file_sha256(&args.demos)? });
        RunLogWriter::create(&log_path, &LogHeader::new("pretrain", cfg.seed, header_config(cfg, inputs)))?
    };

    let ev = &cfg.eval;
    let eval_every = cfg.il.eval_every;
    let n_steps = args.steps.unwrap_or(cfg.il.pretrain_steps);
    // pretrain() evaluates before steps k = 0, E, 2E, .. and once more after the last step.
    let mut eval_steps: Vec<u64> = match eval_every {
        0 => Vec::new(),
        e => (0..n_steps).step_by(e as usize).map(|k| start_step + k).collect(),
    };
    eval_steps.push(start_step + n_steps);
    let mut evals: Vec<(u64, EvalStats)> = Vec::new();
    let mut evaluator = |net: &Mlp| -> Result<f64> {
        let stats = evaluate(net, &env, ev.episodes, ev.seed, ev.greedy)?;
        evals.push((eval_steps[evals.len()], stats));
        Ok(stats.mean_return)
    };
    let opts = PretrainOptions {
        start_step,
        eval_every,
    };
    let out = pretrain(&start, &demos, n_steps, &cfg.il_config(), &opts, Some(&mut evaluator))?;

    let mut steps = out.loss_curve.iter().peekable();
    for (s, stats) in &evals {
        while let Some(&&(step, loss)) = steps.peek() {
            if step >= *s {
                break;
            }
            log.record(&LogRecord::PretrainStep { step, loss })?;
            steps.next();
        }
        log.record(&LogRecord::PretrainEval {
            step: *s,
            mean_return: stats.mean_return,
            success_rate: stats.success_rate,
        })?;
    }
    for &(step, loss) in steps {
        log.record(&LogRecord::PretrainStep { step, loss })?;
    }
    log.flush()?;

    let end_step = start_step + n_steps;
    let final_eval = evals.last().map(|e| e.1).expect("final evaluation always runs");
    let (mut best_step, mut best_eval) = evals
        .iter()
        .find(|(s, _)| *s == out.selected_step)
        .map(|&(s, e)| (s, e))
        .unwrap_or((end_step, final_eval));
    let mut write_best = true;
    if let Some(prev) = &previous {
        if prev.best_eval.mean_return >= best_eval.mean_return && best_path.exists() {
            best_step = prev.best_step;
            best_eval = prev.best_eval;
            write_best = false;
        }
    }
    if write_best {
        Checkpoint::new(cfg.seed, best_step).with("policy", &out.selected).save(&best_path)?;
    }
    Checkpoint::new(cfg.seed, end_step).with("policy", &out.final_policy).save(&last_path)?;
    let summary = PretrainSummary {
        first_step: previous.as_ref().map_or(start_step, |p| p.first_step),
        end_step,
        initial_il_loss: previous.as_ref().map_or(out.initial_full_loss, |p| p.initial_il_loss),
        final_il_loss: out.final_full_loss,
        best_step,
        best_eval,
        final_eval,
    };
    write_json(&summary_path, &summary)?;
    Ok(summary)
}

/// Where fine-tuning starts from.
#[derive(Clone, Debug)]
pub enum FinetuneInit {
    Checkpoint(PathBuf),
    /// Random initialization seeded by the run seed.
    Scratch,
}

#[derive(Clone, Debug)]
pub struct FinetuneArgs {
    pub init: FinetuneInit,
    pub demos: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetrics {
    pub cycle: usize,
    pub eval_return: f64,
    pub eval_success: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSummary {
    pub mode: String,
    pub m: String,
    pub seed: u64,
    pub status: RunStatus,
    pub cycles: usize,
    pub env_steps: usize,
    pub updates: usize,
    /// Policy at the end of the run (the last good one after divergence).
    pub final_checkpoint: Option<CheckpointMetrics>,
    /// Highest evaluated return over all evaluation points.
    pub best_checkpoint: Option<CheckpointMetrics>,
    pub final_train_return: Option<f64>,
    pub final_il_loss: Option<f64>,
}

fn finetune_checkpoint(seed: u64, cycle: usize, policy: &FinetunePolicy, value: Option<&Mlp>) -> Checkpoint {
    let mut ck = Checkpoint::new(seed, cycle as u64).with("policy", policy.base());
    if let Some(r) = policy.residual() {
        ck = ck.with("residual", r);
    }
    if let Some(v) = value {
        ck = ck.with("value", v);
    }
    ck
}

/// Run one fine-tuning job. The log is streamed cycle by cycle; on divergence the
/// artifacts of the last good cycle are still written and `Error::Diverged` is returned.
pub fn cmd_finetune(cfg: &RunConfig, args: &FinetuneArgs) -> Result<(FinetuneSummary, InrilOutcome)> {
    cfg.validate()?;
    let demos = load_demos(cfg, &args.demos)?;
    let (start, init_json) = match &args.init {
        FinetuneInit::Checkpoint(p) => (
            load_policy(cfg, p)?.0,
            serde_json::json!({ "checkpoint": p, "checkpoint_sha256": file_sha256(p)? }),
        ),
        FinetuneInit::Scratch => (init_policy(cfg)?, serde_json::json!("scratch")),
    };
    let inputs = serde_json::json!({
        "init": init_json,
        "demos": args.demos,
        "demos_sha256": file_sha256(&args.demos)?,
    });
    let mut log = RunLogWriter::create(
        &args.out_dir.join(FINETUNE_LOG),
        &LogHeader::new("finetune", cfg.seed, header_config(cfg, inputs)),
    )?;
    let out = run_inril_streaming(
        &start,
        &demos,
        &cfg.env_config(),
        &cfg.interleave(),
        &cfg.rl_config(),
        &cfg.il_config(),
        cfg.budget_env_steps,
        cfg.seed,
        &cfg.run_options(),
        &mut |rec| log.cycle(rec),
    )?;
    log.flush()?;

    let last = out.records.last();
    finetune_checkpoint(cfg.seed, out.records.len(), &out.policy, Some(&out.value)).save(&args.out_dir.join(FINAL_CKPT))?;
    if let Some(b) = &out.best {
        finetune_checkpoint(cfg.seed, b.cycle + 1, &b.policy, None).save(&args.out_dir.join(BEST_CKPT))?;
    }
    let final_checkpoint = match last.and_then(|r| r.eval_return.zip(r.eval_success).map(|e| (r.cycle, e))) {
        Some((cycle, (eval_return, eval_success))) => Some(CheckpointMetrics {
            cycle,
            eval_return,
            eval_success,
        }),
        // The last cycle was not evaluated (divergence): evaluate the restored policy now.
        None if !out.records.is_empty() && cfg.eval.episodes > 0 => {
            let s = evaluate(&out.policy, &cfg.env_config(), cfg.eval.episodes, cfg.eval.seed, cfg.eval.greedy)?;
            Some(CheckpointMetrics {
                cycle: out.records.len() - 1,
                eval_return: s.mean_return,
                eval_success: s.success_rate,
            })
        }
        None => None,
    };
    let m = if cfg.mode == crate::interleave::Mode::RlOnly {
        "infinity".to_string()
    } else {
        cfg.m.to_string()
    };
    let summary = FinetuneSummary {
        mode: cfg.mode.to_string(),
        m,
        seed: cfg.seed,
        status: out.status.clone(),
        cycles: out.records.len(),
        env_steps: last.map_or(0, |r| r.env_steps),
        updates: last.map_or(0, |r| r.updates),
        final_checkpoint,
        best_checkpoint: out.best.as_ref().map(|b| CheckpointMetrics {
            cycle: b.cycle,
            eval_return: b.eval.mean_return,
            eval_success: b.eval.success_rate,
        }),
        final_train_return: last.map(|r| r.mean_return),
        final_il_loss: match last {
            Some(r) => Some(r.il_loss),
            None => Some(il_loss(out.policy.base(), &demos)?),
        },
    };
    write_json(&args.out_dir.join(SUMMARY), &summary)?;
    if let RunStatus::Diverged(msg) = &out.status {
        return Err(Error::Diverged(format!(
            "{msg}; artifacts of the last good cycle are in {}",
            args.out_dir.display()
        )));
    }
    Ok((summary, out))
}

/// Run the theory suite, write `report.json` into `out_dir` when given, and fail with
/// `Error::TheoryCheckFailed` if any check fails (the report is written first).
pub fn cmd_theory_check(cfg: &SuiteConfig, out_dir: Option<&Path>) -> Result<CheckReport> {
    let report = run_check_suite(cfg)?;
    if let Some(dir) = out_dir {
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(report)
}
