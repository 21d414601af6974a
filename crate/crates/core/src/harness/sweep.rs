use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::commands::{cmd_finetune, write_csv, write_json, FinetuneArgs, FinetuneInit, FINETUNE_LOG};
use super::config::RunConfig;
use super::runlog::RunLog;
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::interleave::{CycleRecord, MSpec, Mode};

pub const FAILURE_MARKER: &str = "FAILED.json";
/// Relative drop below the running maximum that counts as the second descent.
pub const DOUBLE_DESCENT_DROP: f64 = 0.2;

/// One entry of the m grid: a positive integer or `infinity` (RL only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MValue {
    Finite(usize),
    Infinity,
}

impl fmt::Display for MValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MValue::Finite(m) => write!(f, "{m}"),
            MValue::Infinity => f.write_str("infinity"),
        }
    }
}

impl FromStr for MValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "infinity" | "inf" => Ok(MValue::Infinity),
            t => match t.parse::<usize>() {
                Ok(m) if m >= 1 => Ok(MValue::Finite(m)),
                _ => Err(Error::Usage(format!("m value must be a positive integer or 'infinity', got '{s}'"))),
            },
        }
    }
}

impl Serialize for MValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MValue::Finite(m) => s.serialize_u64(*m as u64),
            MValue::Infinity => s.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for MValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(m) => MValue::Finite(m as usize).to_string().parse(),
            Raw::Str(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub m_values: Vec<MValue>,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub env: EnvKind,
    pub modes: Vec<Mode>,
}

/// One run of the grid.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SweepCell {
    pub mode: Mode,
    pub m: MValue,
    pub seed: u64,
}

impl SweepCell {
    pub fn dir_name(&self) -> String {
        format!("{}_m{}_s{}", self.mode, self.m, self.seed)
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m_values.is_empty() || self.seeds.is_empty() || self.modes.is_empty() {
            return Err(Error::Config("sweep needs at least one m value, seed and mode".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("sweep budget must be positive".into()));
        }
        Ok(())
    }

    /// modes x m x seeds, with every `infinity` or `rl_only` combination collapsed into a
    /// single rl_only cell per seed.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for &mode in &self.modes {
            for &m in &self.m_values {
                for &seed in &self.seeds {
                    let cell = if m == MValue::Infinity || mode == Mode::RlOnly {
                        SweepCell {
                            mode: Mode::RlOnly,
                            m: MValue::Infinity,
                            seed,
                        }
                    } else {
                        SweepCell { mode, m, seed }
                    };
                    if !cells.contains(&cell) {
                        cells.push(cell);
                    }
                }
            }
        }
        cells
    }

    /// Run configuration of one cell: `base` with env, budget, mode, m and seed replaced.
    pub fn cell_config(&self, base: &RunConfig, cell: &SweepCell) -> RunConfig {
        let mut cfg = base.clone();
        cfg.env = self.env;
        cfg.budget_env_steps = self.budget;
        cfg.mode = cell.mode;
        cfg.seed = cell.seed;
        cfg.bc_reg_weight = if cell.mode == Mode::BcLossReg { base.bc_reg_weight } else { 0.0 };
        // rl_only ignores IL steps; m = 1 makes every RL update its own logged cycle.
        cfg.m = match cell.m {
            MValue::Finite(m) => MSpec::Fixed(m),
            MValue::Infinity => MSpec::Fixed(1),
        };
        cfg
    }
}

#[derive(Clone, Debug)]
pub struct SweepArgs {
    pub init: FinetuneInit,
    pub demos: PathBuf,
    pub out_dir: PathBuf,
    /// Worker threads; cells are independent so any count gives identical per-run logs.
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FailureMarker {
    cell: SweepCell,
    error: String,
}

/// Execute every cell (in parallel), then reduce the per-run logs into a summary.
/// A failing cell leaves a `FAILED.json` marker and does not stop the sweep.
pub fn cmd_sweep_m(base: &RunConfig, spec: &SweepSpec, args: &SweepArgs) -> Result<SweepSummary> {
    spec.validate()?;
    let cells = spec.cells();
    for cell in &cells {
        spec.cell_config(base, cell).validate()?;
    }
    let next = AtomicUsize::new(0);
    let io_error = Mutex::new(None);
    let jobs = args.jobs.clamp(1, cells.len());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(i) else { break };
                let dir = args.out_dir.join("cells").join(cell.dir_name());
                let marker = dir.join(FAILURE_MARKER);
                let _ = std::fs::remove_file(&marker);
                let run = FinetuneArgs {
                    init: args.init.clone(),
                    demos: args.demos.clone(),
                    out_dir: dir,
                };
                if let Err(e) = cmd_finetune(&spec.cell_config(base, cell), &run) {
                    let m = FailureMarker {
                        cell: cell.clone(),
                        error: e.to_string(),
                    };
                    if let Err(w) = write_json(&marker, &m) {
                        io_error.lock().unwrap().get_or_insert(w);
                    }
                }
            });
        }
    });
    if let Some(e) = io_error.into_inner().unwrap() {
        return Err(e);
    }
    write_json(&args.out_dir.join("sweep_spec.json"), spec)?;
    summarize_sweep(&args.out_dir)
}

/// True when the series rises above its first value and later drops to at most
/// `(1 - DOUBLE_DESCENT_DROP)` of its running maximum (in absolute terms).
pub fn double_descent(series: &[f64]) -> bool {
    let Some(&first) = series.first() else { return false };
    let mut run_max = first;
    for &x in series {
        run_max = run_max.max(x);
        if run_max > first && x <= run_max - DOUBLE_DESCENT_DROP * run_max.abs() {
            return true;
        }
    }
    false
}

/// Trapezoidal area under `mean_return` against env steps, divided by the env-step span:
/// the step-weighted average training return.
pub fn normalized_auc(records: &[&CycleRecord]) -> Option<f64> {
    match records {
        [] => None,
        [only] => Some(only.mean_return),
        _ => {
            let mut area = 0.0;
            for w in records.windows(2) {
                let dx = (w[1].env_steps - w[0].env_steps) as f64;
                area += 0.5 * dx * (w[0].mean_return + w[1].mean_return);
            }
            let span = (records[records.len() - 1].env_steps - records[0].env_steps) as f64;
            Some(if span > 0.0 { area / span } else { records[0].mean_return })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub mode: Mode,
    pub m: MValue,
    pub seed: u64,
    pub status: String,
    pub cycles: usize,
    pub env_steps: usize,
    pub final_return: Option<f64>,
    pub final_success: Option<f64>,
    pub final_eval_return: Option<f64>,
    pub final_il_loss: Option<f64>,
    pub max_il_loss: Option<f64>,
    pub auc: Option<f64>,
    pub double_descent: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub mode: Mode,
    pub m: MValue,
    pub runs: usize,
    pub failed: usize,
    pub mean_final_return: Option<f64>,
    pub mean_final_il_loss: Option<f64>,
    pub mean_auc: Option<f64>,
    pub double_descent_runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub runs: Vec<RunRow>,
    pub by_m: Vec<GroupRow>,
}

fn row_from_log(log: &RunLog) -> Result<RunRow> {
    let run: RunConfig = serde_json::from_value(log.header.config["run"].clone())
        .map_err(|e| Error::Parse(format!("run log header has no usable config: {e}")))?;
    let cycles = log.cycles();
    let il: Vec<f64> = cycles.iter().map(|c| c.il_loss).collect();
    let last = cycles.last();
    Ok(RunRow {
        mode: run.mode,
        m: match (run.mode, run.m) {
            (Mode::RlOnly, _) => MValue::Infinity,
            (_, MSpec::Fixed(m)) => MValue::Finite(m),
            (_, MSpec::Adaptive) => return Err(Error::Parse("sweep logs must use a fixed m".into())),
        },
        seed: log.header.seed,
        status: "ok".into(),
        cycles: cycles.len(),
        env_steps: last.map_or(0, |c| c.env_steps),
        final_return: last.map(|c| c.mean_return),
        final_success: last.map(|c| c.success_rate),
        final_eval_return: cycles.iter().rev().find_map(|c| c.eval_return),
        final_il_loss: il.last().copied(),
        max_il_loss: il.iter().copied().reduce(f64::max),
        auc: normalized_auc(&cycles),
        double_descent: double_descent(&il),
        error: None,
    })
}

fn mean(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Rebuild the summary from `out_dir/cells/*` alone and write `summary.csv`,
/// `summary_by_m.csv` and `summary.json`. Rows are sorted, so the result does not depend on
/// the order in which cells finished.
pub fn summarize_sweep(out_dir: &Path) -> Result<SweepSummary> {
    let cells_dir = out_dir.join("cells");
    let entries = std::fs::read_dir(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
    let mut runs = Vec::new();
    for entry in entries {
        let dir = entry.map_err(|e| Error::io(&cells_dir, e))?.path();
        let marker = dir.join(FAILURE_MARKER);
        let log_path = dir.join(FINETUNE_LOG);
        let failure: Option<FailureMarker> = if marker.exists() {
            let text = std::fs::read_to_string(&marker).map_err(|e| Error::io(&marker, e))?;
            Some(serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", marker.display())))?)
        } else {
            None
        };
        let mut row = if log_path.exists() {
            Some(row_from_log(&RunLog::read(&log_path)?)?)
        } else {
            None
        };
        match (&mut row, failure) {
            (Some(r), Some(f)) => {
                r.status = if f.error.starts_with("training diverged") { "diverged" } else { "failed" }.into();
                r.error = Some(f.error);
            }
            (None, Some(f)) => {
                row = Some(RunRow {
                    mode: f.cell.mode,
                    m: f.cell.m,
                    seed: f.cell.seed,
                    status: "failed".into(),
                    cycles: 0,
                    env_steps: 0,
                    final_return: None,
                    final_success: None,
                    final_eval_return: None,
                    final_il_loss: None,
                    max_il_loss: None,
                    auc: None,
                    double_descent: false,
                    error: Some(f.error),
                })
            }
            _ => {}
        }
        runs.extend(row);
    }
    runs.sort_by(|a, b| (a.mode, a.m, a.seed).cmp(&(b.mode, b.m, b.seed)));

    let mut by_m: Vec<GroupRow> = Vec::new();
    for r in &runs {
        if by_m.last().is_some_and(|g| (g.mode, g.m) == (r.mode, r.m)) {
            continue;
        }
        let group: Vec<&RunRow> = runs.iter().filter(|x| (x.mode, x.m) == (r.mode, r.m)).collect();
        let ok = || group.iter().filter(|x| x.status == "ok");
        by_m.push(GroupRow {
            mode: r.mode,
            m: r.m,
            runs: group.len(),
            failed: group.iter().filter(|x| x.status != "ok").count(),
            mean_final_return: mean(ok().map(|x| x.final_return)),
            mean_final_il_loss: mean(ok().map(|x| x.final_il_loss)),
            mean_auc: mean(ok().map(|x| x.auc)),
            double_descent_runs: group.iter().filter(|x| x.double_descent).count(),
        });
    }
    let summary = SweepSummary { runs, by_m };
    write_json(&out_dir.join("summary.json"), &summary)?;
    write_csv(&out_dir.join("summary.csv"), &summary.runs)?;
    write_csv(&out_dir.join("summary_by_m.csv"), &summary.by_m)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_accounting() {
        let spec = SweepSpec {
            m_values: vec![MValue::Finite(1), MValue::Infinity],
            seeds: vec![4],
            budget: 1000,
            env: EnvKind::Pointmass,
            modes: vec![Mode::FullNetSurgery],
        };
        assert_eq!(spec.cells().len(), 2);
        let spec = SweepSpec {
            modes: vec![Mode::FullNetSurgery, Mode::FullNetNaive, Mode::RlOnly],
            seeds: vec![1, 2],
            ..spec
        };
        // 2 finite cells per seed, plus one shared rl_only cell per seed.
        assert_eq!(spec.cells().len(), 6);
    }

    #[test]
    fn m_values_parse() {
        assert_eq!("infinity".parse::<MValue>().unwrap(), MValue::Infinity);
        assert_eq!("10".parse::<MValue>().unwrap(), MValue::Finite(10));
        assert!("0".parse::<MValue>().is_err());
        assert!(MValue::Finite(50) < MValue::Infinity);
    }

    #[test]
    fn double_descent_examples() {
        assert!(double_descent(&[1.0, 2.0, 1.5, 1.6]));
        assert!(!double_descent(&[1.0, 2.0, 1.7]));
        // Monotone decrease from the start is not a double descent.
        assert!(!double_descent(&[2.0, 1.0, 0.5]));
        assert!(!double_descent(&[]));
        assert!(double_descent(&[-1.0, 1.0, 0.8]));
    }
}
