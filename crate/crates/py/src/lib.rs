//! Python bindings: demonstrations, policies, pretraining, fine-tuning and the
//! quadratic-testbed checks.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use inril_core::envs::{generate_demos as core_generate_demos, DemoDataset, EnvConfig, EnvKind};
use inril_core::harness::RunConfig;
use inril_core::il::{pretrain as core_pretrain, IlBatchConfig, PretrainOptions};
use inril_core::interleave::{dual_cone_combine as core_dual_cone, measure_alignment, run_inril};
use inril_core::nnkit::{Activation, Checkpoint, Mlp, MlpSpec, ParamVector};
use inril_core::rl::evaluate as core_evaluate;
use inril_core::theory::{self, SuiteConfig};
use inril_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Config(_) | Error::Usage(_) | Error::Shape(_) | Error::Parse(_) | Error::Domain(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn env_kind(name: &str) -> PyResult<EnvKind> {
    name.parse().map_err(to_py)
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        serde_json::Value::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(json_to_py(py, x)?)?;
            }
            list.into_any().unbind()
        }
        serde_json::Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn to_dict<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

/// Expert demonstrations: (observation, action) pairs grouped into trajectories.
#[pyclass(name = "DemoDataset", module = "inril", from_py_object)]
#[derive(Clone)]
struct PyDemos {
    inner: DemoDataset,
}

#[pymethods]
impl PyDemos {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDemos {
            inner: DemoDataset::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn env(&self) -> String {
        self.inner.env.to_string()
    }

    #[getter]
    fn n_trajectories(&self) -> usize {
        self.inner.n_trajectories
    }

    /// `(obs, action)` of pair `i`.
    fn pair(&self, i: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let p = self
            .inner
            .pairs
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("pair index {i} out of range")))?;
        Ok((p.obs.clone(), p.action.clone()))
    }
}

/// Gaussian MLP policy with a state-independent log std.
#[pyclass(name = "Policy", module = "inril", from_py_object)]
#[derive(Clone)]
struct PyPolicy {
    inner: Mlp,
}

#[pymethods]
impl PyPolicy {
    #[new]
    #[pyo3(signature = (env, hidden = vec![64, 64], seed = 0, init_log_std = -0.5))]
    fn new(env: &str, hidden: Vec<usize>, seed: u64, init_log_std: f64) -> PyResult<Self> {
        let cfg = EnvConfig::new(env_kind(env)?);
        let spec = MlpSpec::policy(cfg.obs_dim(), &hidden, cfg.act_dim(), Activation::Tanh).map_err(to_py)?;
        Ok(PyPolicy {
            inner: Mlp::new(spec, seed, init_log_std).map_err(to_py)?,
        })
    }

    /// Load the network named `name` from a checkpoint file.
    #[staticmethod]
    #[pyo3(signature = (path, name = "policy"))]
    fn load(path: PathBuf, name: &str) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(to_py)?;
        Ok(PyPolicy {
            inner: ck.require(name).map_err(to_py)?.clone(),
        })
    }

    #[pyo3(signature = (path, seed = 0, step = 0))]
    fn save(&self, path: PathBuf, seed: u64, step: u64) -> PyResult<()> {
        Checkpoint::new(seed, step).with("policy", &self.inner).save(&path).map_err(to_py)
    }

    /// Action mean and standard deviation at `obs`.
    fn forward(&self, obs: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.inner.forward(&obs).map_err(to_py)
    }

    fn log_prob(&self, obs: Vec<f64>, action: Vec<f64>) -> PyResult<f64> {
        self.inner.log_prob(&obs, &action).map_err(to_py)
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    fn params(&self) -> Vec<f64> {
        self.inner.params().as_slice().to_vec()
    }

    fn set_params(&mut self, params: Vec<f64>) -> PyResult<()> {
        self.inner.set_params(ParamVector::from_vec(params)).map_err(to_py)
    }

    /// SHA-256 of the parameter bits.
    fn digest(&self) -> String {
        self.inner.params().digest()
    }
}

/// Roll the scripted expert with Gaussian action noise.
#[pyfunction]
#[pyo3(signature = (env, n_trajectories, noise = 0.0, seed = 0))]
fn generate_demos(env: &str, n_trajectories: usize, noise: f64, seed: u64) -> PyResult<PyDemos> {
    let inner = core_generate_demos(&EnvConfig::new(env_kind(env)?), n_trajectories, noise, seed).map_err(to_py)?;
    Ok(PyDemos { inner })
}

/// Behavior cloning for `steps` mini-batch SGD steps. Returns the trained policy and a
/// summary dict.
#[pyfunction]
#[pyo3(signature = (policy, demos, steps, lr = 1e-2, batch_size = 64, seed = 0))]
fn pretrain(
    py: Python<'_>,
    policy: &PyPolicy,
    demos: &PyDemos,
    steps: u64,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> PyResult<(PyPolicy, Py<PyAny>)> {
    let cfg = IlBatchConfig {
        batch_size,
        lr,
        shuffle_seed: seed,
    };
    let out = core_pretrain(&policy.inner, &demos.inner, steps, &cfg, &PretrainOptions::default(), None).map_err(to_py)?;
    let summary = serde_json::json!({
        "initial_il_loss": out.initial_full_loss,
        "final_il_loss": out.final_full_loss,
        "loss_curve": out.loss_curve,
    });
    Ok((PyPolicy { inner: out.final_policy }, json_to_py(py, &summary)?))
}

/// Evaluate `policy` on fresh episodes: `{mean_return, success_rate, episodes}`.
#[pyfunction]
#[pyo3(signature = (policy, env, episodes = 50, seed = 0, greedy = true))]
fn evaluate(py: Python<'_>, policy: &PyPolicy, env: &str, episodes: usize, seed: u64, greedy: bool) -> PyResult<Py<PyAny>> {
    let stats = core_evaluate(&policy.inner, &EnvConfig::new(env_kind(env)?), episodes, seed, greedy).map_err(to_py)?;
    to_dict(py, &stats)
}

/// Fine-tune `policy` under a run configuration given as TOML text (the same format the
/// CLI reads). Returns `(final base policy, status, list of cycle-record dicts)`.
#[pyfunction]
#[pyo3(signature = (policy, demos, config = ""))]
fn finetune(py: Python<'_>, policy: &PyPolicy, demos: &PyDemos, config: &str) -> PyResult<(PyPolicy, Py<PyAny>, Py<PyAny>)> {
    let cfg = RunConfig::from_toml_str(config).map_err(to_py)?;
    let out = py
        .detach(|| {
            run_inril(
                &policy.inner,
                &demos.inner,
                &cfg.env_config(),
                &cfg.interleave(),
                &cfg.rl_config(),
                &cfg.il_config(),
                cfg.budget_env_steps,
                cfg.seed,
                &cfg.run_options(),
            )
        })
        .map_err(to_py)?;
    Ok((
        PyPolicy {
            inner: out.policy.base().clone(),
        },
        to_dict(py, &out.status)?,
        to_dict(py, &out.records)?,
    ))
}

/// Dual-cone combination of an IL and an RL gradient.
#[pyfunction]
fn dual_cone_combine(g_il: Vec<f64>, g_rl: Vec<f64>) -> PyResult<Vec<f64>> {
    same_len(&g_il, &g_rl)?;
    let d = core_dual_cone(&ParamVector::from_vec(g_il), &ParamVector::from_vec(g_rl));
    Ok(d.as_slice().to_vec())
}

/// `-cos(g_il, g_rl)`, or 0 when either gradient vanishes.
#[pyfunction]
fn alignment(g_il: Vec<f64>, g_rl: Vec<f64>) -> PyResult<f64> {
    same_len(&g_il, &g_rl)?;
    Ok(measure_alignment(&ParamVector::from_vec(g_il), &ParamVector::from_vec(g_rl)))
}

fn same_len(a: &[f64], b: &[f64]) -> PyResult<()> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err(format!("gradient lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// `(ratio, beta)` of interleaved over RL-only update counts.
#[pyfunction]
fn efficiency_ratio(m: f64, delta: f64, scaled_gap: f64) -> PyResult<(f64, f64)> {
    let e = theory::efficiency_ratio(m, delta, scaled_gap).map_err(to_py)?;
    Ok((e.ratio, e.beta))
}

/// Fixed point of the one-dimensional cycle map.
#[pyfunction]
fn fixed_point_1d(alpha: f64, m: usize) -> f64 {
    theory::fixed_point_1d(alpha, m)
}

/// Run the quadratic-testbed suite. Returns `(all_pass, table)`.
#[pyfunction]
#[pyo3(signature = (inject_l_scale = None))]
fn theory_check(py: Python<'_>, inject_l_scale: Option<f64>) -> PyResult<(bool, String)> {
    let cfg = SuiteConfig {
        inject_l_scale,
        ..Default::default()
    };
    let report = py.detach(|| theory::run_check_suite(&cfg)).map_err(to_py)?;
    Ok((report.all_pass(), report.to_table()))
}

#[pymodule]
fn inril(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDemos>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(generate_demos, m)?)?;
    m.add_function(wrap_pyfunction!(pretrain, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(finetune, m)?)?;
    m.add_function(wrap_pyfunction!(dual_cone_combine, m)?)?;
    m.add_function(wrap_pyfunction!(alignment, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_point_1d, m)?)?;
    m.add_function(wrap_pyfunction!(theory_check, m)?)?;
    m.add("__version__", inril_core::CODE_VERSION)?;
    Ok(())
}
