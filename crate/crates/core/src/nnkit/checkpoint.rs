//! Plain-text checkpoint format.
//!
//! ```text
//! inril-checkpoint
//! {"layout_version":1,"seed":7,"step":2000,"networks":[{"name":"policy","spec":{..},"n_params":N}, ..]}
//! <param 0 of network 0>
//! <param 1 of network 0>
//! ...
//! ```
//!
//! Parameters follow in header order, one per line, written with `{:e}` (shortest
//! representation that parses back to the same bits), so load(save(x)) is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpSpec};
use super::param::ParamVector;
use crate::error::{Error, Result};

pub const MAGIC: &str = "inril-checkpoint";
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    spec: MlpSpec,
    n_params: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    layout_version: u32,
    seed: u64,
    step: u64,
    networks: Vec<NetworkHeader>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    /// Training step the parameters correspond to (used when resuming).
    pub step: u64,
    pub networks: Vec<(String, Mlp)>,
}

impl Checkpoint {
    pub fn new(seed: u64, step: u64) -> Self {
        Checkpoint {
            seed,
            step,
            networks: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, net: &Mlp) -> Self {
        self.networks.push((name.to_string(), net.clone()));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Mlp> {
        self.networks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn require(&self, name: &str) -> Result<&Mlp> {
        self.get(name)
            .ok_or_else(|| Error::Parse(format!("checkpoint has no network named '{name}'")))
    }

    pub fn to_text(&self) -> String {
        let header = Header {
            layout_version: LAYOUT_VERSION,
            seed: self.seed,
            step: self.step,
            networks: self
                .networks
                .iter()
                .map(|(name, m)| NetworkHeader {
                    name: name.clone(),
                    spec: m.spec().clone(),
                    n_params: m.n_params(),
                })
                .collect(),
        };
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for (_, m) in &self.networks {
            for v in m.params().as_slice() {
                out.push_str(&format!("{v:e}\n"));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Parse("missing checkpoint magic line".into()));
        }
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Parse("missing checkpoint header".into()))?;
        let header: Header = serde_json::from_str(header_line)
            .map_err(|e| Error::Parse(format!("checkpoint header: {e}")))?;
        if header.layout_version != LAYOUT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint layout version {}",
                header.layout_version
            )));
        }
        let mut networks = Vec::with_capacity(header.networks.len());
        let mut line_no = 2;
        for nh in header.networks {
            if nh.n_params != nh.spec.n_params() {
                return Err(Error::Parse(format!(
                    "network '{}' declares {} parameters but its spec needs {}",
                    nh.name,
                    nh.n_params,
                    nh.spec.n_params()
                )));
            }
            let mut values = Vec::with_capacity(nh.n_params);
            for _ in 0..nh.n_params {
                line_no += 1;
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Parse(format!("checkpoint truncated at line {line_no}")))?;
                let v: f64 = line
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {line_no}: not a number: '{line}'")))?;
                values.push(v);
            }
            let mlp = Mlp::from_params(nh.spec, ParamVector::from_vec(values))
                .map_err(|e| Error::Parse(format!("network '{}': {e}", nh.name)))?;
            networks.push((nh.name, mlp));
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Parse("trailing data after checkpoint parameters".into()));
        }
        Ok(Checkpoint {
            seed: header.seed,
            step: header.step,
            networks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::parse(&text)
    }
}
