//! Newline-delimited JSON run logs.
//!
//! The first line is a [`LogHeader`]; every later line is one tagged [`LogRecord`].

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interleave::CycleRecord;

pub const LOG_FORMAT: &str = "inril-runlog/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    /// Fully resolved configuration of the run.
    pub config: serde_json::Value,
}

impl LogHeader {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        LogHeader {
            format: LOG_FORMAT.to_string(),
            command: command.to_string(),
            code_version: crate::CODE_VERSION.to_string(),
            seed,
            config,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Cycle(CycleRecord),
    PretrainStep { step: u64, loss: f64 },
    PretrainEval { step: u64, mean_return: f64, success_rate: f64 },
}

pub struct RunLogWriter {
    path: PathBuf,
    out: BufWriter<File>,
    last_env_steps: usize,
    last_updates: usize,
    last_pretrain_step: Option<u64>,
}

impl RunLogWriter {
    /// Start a new log, replacing any existing file.
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = RunLogWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            last_env_steps: 0,
            last_updates: 0,
            last_pretrain_step: None,
        };
        w.write_line(&serde_json::to_string(header).expect("header serializes"))?;
        Ok(w)
    }

    /// Continue an existing log. Monotonicity checks resume from its last records.
    pub fn append(path: &Path) -> Result<Self> {
        let log = RunLog::read(path)?;
        let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        let last_cycle = log.cycles().last().cloned();
        Ok(RunLogWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            last_env_steps: last_cycle.as_ref().map_or(0, |c| c.env_steps),
            last_updates: last_cycle.as_ref().map_or(0, |c| c.updates),
            last_pretrain_step: log.pretrain_steps().last().map(|(s, _)| *s),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&mut self, rec: &LogRecord) -> Result<()> {
        match rec {
            LogRecord::Cycle(c) => {
                if c.env_steps < self.last_env_steps || c.updates < self.last_updates {
                    return Err(Error::Usage(format!(
                        "cycle {} goes backwards in env_steps or updates ({} < {} or {} < {})",
                        c.cycle, c.env_steps, self.last_env_steps, c.updates, self.last_updates
                    )));
                }
                self.last_env_steps = c.env_steps;
                self.last_updates = c.updates;
            }
            LogRecord::PretrainStep { step, .. } => {
                if self.last_pretrain_step.is_some_and(|last| *step <= last) {
                    return Err(Error::Usage(format!("pretraining step {step} is not after the previous one")));
                }
                self.last_pretrain_step = Some(*step);
            }
            LogRecord::PretrainEval { .. } => {}
        }
        let line = serde_json::to_string(rec).map_err(|e| Error::Numeric(format!("cannot serialize record: {e}")))?;
        self.write_line(&line)
    }

    pub fn cycle(&mut self, c: &CycleRecord) -> Result<()> {
        self.record(&LogRecord::Cycle(c.clone()))
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

impl Drop for RunLogWriter {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
}

impl RunLog {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let at = |i: usize| format!("{}:{}", path.display(), i + 1);
        let header: LogHeader = match lines.next() {
            Some((i, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&line).map_err(|e| Error::Parse(format!("{}: bad header: {e}", at(i))))?
            }
            None => return Err(Error::Parse(format!("{}: empty run log", path.display()))),
        };
        if header.format != LOG_FORMAT {
            return Err(Error::Parse(format!("{}: unknown format '{}'", at(0), header.format)));
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("{}: {e}", at(i))))?);
        }
        Ok(RunLog { header, records })
    }

    pub fn cycles(&self) -> Vec<&CycleRecord> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Cycle(c) => Some(c),
                _ => None,
            })
            .collect()
    }

    pub fn pretrain_steps(&self) -> Vec<(u64, f64)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::PretrainStep { step, loss } => Some((*step, *loss)),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(cycle: usize, env_steps: usize) -> CycleRecord {
        CycleRecord {
            cycle,
            env_steps,
            updates: 2 * (cycle + 1),
            il_updates: cycle + 1,
            rl_updates: cycle + 1,
            m_used: 1,
            mean_return: 0.5,
            success_rate: 0.0,
            il_loss: 1.25,
            value_loss: 0.1,
            rho: Some(-0.2),
            grad_norm_il: None,
            grad_norm_rl: None,
            m_balance: None,
            eval_return: None,
            eval_success: None,
            wall_time_s: None,
        }
    }

    #[test]
    fn write_read_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.ndjson");
        let header = LogHeader::new("finetune", 3, serde_json::json!({"m": 1}));
        {
            let mut w = RunLogWriter::create(&path, &header).unwrap();
            w.cycle(&rec(0, 100)).unwrap();
            assert!(w.cycle(&rec(1, 50)).is_err());
        }
        {
            let mut w = RunLogWriter::append(&path).unwrap();
            assert!(w.cycle(&rec(1, 99)).is_err());
            w.cycle(&rec(1, 200)).unwrap();
        }
        let log = RunLog::read(&path).unwrap();
        assert_eq!(log.header, header);
        assert_eq!(log.cycles().len(), 2);
        assert_eq!(*log.cycles()[1], rec(1, 200));
    }

    #[test]
    fn bad_line_names_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.ndjson");
        let header = LogHeader::new("pretrain", 0, serde_json::Value::Null);
        RunLogWriter::create(&path, &header).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"type\":\"pretrain_step\",\"step\":0,\"loss\":1.0}\n{oops\n");
        std::fs::write(&path, text).unwrap();
        match RunLog::read(&path) {
            Err(Error::Parse(msg)) => assert!(msg.contains("log.ndjson:3"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
