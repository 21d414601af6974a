use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::*;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, stream};

/// One line of a check report. `margin > 0` exactly when the check passes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    pub margin: f64,
}

impl CheckRecord {
    /// Passes when `lhs <= rhs`.
    fn at_most(name: String, lhs: f64, rhs: f64) -> Self {
        CheckRecord {
            name,
            lhs,
            rhs,
            pass: lhs <= rhs,
            margin: rhs - lhs,
        }
    }

    /// Passes when `|lhs - rhs| <= tol`.
    fn close(name: String, lhs: f64, rhs: f64, tol: f64) -> Self {
        let err = (lhs - rhs).abs();
        CheckRecord {
            name,
            lhs,
            rhs,
            pass: err <= tol,
            margin: tol - err,
        }
    }
}

/// Measured quantity reported alongside the checks without a pass/fail verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub name: String,
    pub value: f64,
    pub note: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// `Err(TheoryCheckFailed)` naming the failed checks, if any.
    pub fn into_result(self) -> Result<Self> {
        if self.all_pass() {
            return Ok(self);
        }
        let names: Vec<_> = self.failures().map(|c| c.name.clone()).collect();
        Err(Error::TheoryCheckFailed(format!("{} of {} checks failed: {}", names.len(), self.checks.len(), names.join(", "))))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
        let _ = writeln!(out, "{:<w$}  {:>13}  {:>13}  {:>13}  result", "name", "lhs", "rhs", "margin");
        for c in &self.checks {
            let verdict = if c.pass { "pass" } else { "FAIL" };
            let _ = writeln!(out, "{:<w$}  {:>13.6e}  {:>13.6e}  {:>13.6e}  {verdict}", c.name, c.lhs, c.rhs, c.margin);
        }
        if !self.diagnostics.is_empty() {
            let _ = writeln!(out, "\ndiagnostics:");
            for d in &self.diagnostics {
                let _ = writeln!(out, "  {} = {:.6e}  ({})", d.name, d.value, d.note);
            }
        }
        let passed = self.checks.iter().filter(|c| c.pass).count();
        let _ = writeln!(out, "\n{passed}/{} checks passed", self.checks.len());
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Random pairs per noise level.
    pub n_pairs: usize,
    pub dim: usize,
    pub ms: Vec<usize>,
    /// `(c_IL, c_RL)` pairs, cycled through by pair index.
    pub step_constants: Vec<(f64, f64)>,
    pub noise_sigma: f64,
    pub batch: usize,
    pub rl_updates: usize,
    pub inril_cycles: usize,
    pub delta_slack: f64,
    /// Multiply every declared smoothness constant by this factor (negative control).
    pub inject_l_scale: Option<f64>,
    pub paired_seeds: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            n_pairs: 8,
            dim: 4,
            ms: vec![1, 2, 3, 5],
            step_constants: vec![(0.5, 0.5), (0.9, 0.5), (0.3, 0.9), (0.5, 0.3)],
            noise_sigma: 0.5,
            batch: 16,
            rl_updates: 200,
            inril_cycles: 1000,
            delta_slack: 0.0,
            inject_l_scale: None,
            paired_seeds: 10,
        }
    }
}

impl SuiteConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SuiteConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 || self.dim == 0 || self.rl_updates == 0 || self.inril_cycles == 0 || self.batch == 0 {
            return Err(Error::Config("suite sizes must be positive".into()));
        }
        if self.ms.is_empty() || self.ms.contains(&0) || self.step_constants.is_empty() {
            return Err(Error::Config("ms must be non-empty positive ratios and step_constants non-empty".into()));
        }
        if let Some(s) = self.inject_l_scale {
            if !(s > 0.0) {
                return Err(Error::Config("inject_l_scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Outcome of one covRL check over every prefix `t = 1..=T` of an RL-only trace: the
/// prefix with the smallest margin.
pub fn covrl_worst_prefix(trace: &TraceLog, k: &TheoryConstants) -> (usize, f64, f64) {
    let gap = trace.scaled_gap(k);
    let mut best = f64::INFINITY;
    let mut worst = (1, f64::NAN, f64::NAN, f64::INFINITY);
    for (i, c) in trace.cycles.iter().enumerate() {
        best = best.min(c.grad_rl_norm * c.grad_rl_norm);
        let rhs = covrl_bound(k, gap, i + 1);
        if rhs - best < worst.3 {
            worst = (i + 1, best, rhs, rhs - best);
        }
    }
    (worst.0, worst.1, worst.2)
}

/// covINT left and right sides at the horizon of an interleaved trace.
pub fn covint_sides(trace: &TraceLog, k: &TheoryConstants, t: usize) -> Result<(f64, f64)> {
    let delta = delta_il_rl_prefix(trace, k, t)?;
    let rhs = covint_bound(k, trace.scaled_gap(k), delta, trace.m_bar(t), t);
    Ok((trace.min_grad_rl_sq(t), rhs))
}

fn declared(pair: &QuadraticPair, theta0: &DVector<f64>, c: (f64, f64), cfg: &SuiteConfig) -> Result<TheoryConstants> {
    let mut k = TheoryConstants::exact(pair, theta0, c.0, c.1)?;
    k.delta = cfg.delta_slack;
    if let Some(s) = cfg.inject_l_scale {
        k.l_il *= s;
        k.l_rl *= s;
    }
    Ok(k)
}

fn pair_options(cfg: &SuiteConfig, sigma: f64, relation: Relation) -> RandomPairOptions {
    RandomPairOptions {
        dim: cfg.dim,
        relation,
        sigma,
        batch: cfg.batch,
        ..Default::default()
    }
}

/// Run the full check suite on seeded random quadratic pairs.
pub fn run_check_suite(cfg: &SuiteConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let mut report = CheckReport::default();
    bound_checks(cfg, &mut report)?;
    fixed_point_checks(&mut report)?;
    efficiency_checks(&mut report)?;
    rho_checks(cfg, &mut report)?;
    paired_checks(cfg, &mut report)?;
    aligned_diagnostics(cfg, &mut report)?;
    Ok(report)
}

fn bound_checks(cfg: &SuiteConfig, report: &mut CheckReport) -> Result<()> {
    let mut max_delta: f64 = 0.0;
    let mut prefix_violations = 0usize;
    let mut inril_runs = 0usize;
    for (noise_tag, sigma) in [("noiseless", 0.0), ("noisy", cfg.noise_sigma)] {
        let opts = pair_options(cfg, sigma, Relation::Independent);
        for i in 0..cfg.n_pairs {
            let pair_seed = derive_seed(cfg.seed, stream::THEORY_INSTANCE, i as u64);
            let (pair, theta0) = QuadraticPair::random(&opts, pair_seed)?;
            let c = cfg.step_constants[i % cfg.step_constants.len()];
            let k = declared(&pair, &theta0, c, cfg)?;
            if noise_tag == "noiseless" {
                let err = (k.l_rl - pair.l_rl()).abs().max((k.l_il - pair.l_il()).abs());
                report.checks.push(CheckRecord::at_most(format!("constants_consistent/pair{i}"), err, L_MATCH_TOL));
            }
            let run_seed = derive_seed(pair_seed, stream::THEORY_RL_NOISE, 1);

            let trace = run_schedule_unchecked(&pair, &theta0, Schedule::RlOnly, cfg.rl_updates, &k, run_seed)?;
            let (t, lhs, rhs) = covrl_worst_prefix(&trace, &k);
            report
                .checks
                .push(CheckRecord::at_most(format!("cov_rl/{noise_tag}/pair{i}/worst_t={t}"), lhs, rhs));

            for &m in &cfg.ms {
                let trace = run_schedule_unchecked(&pair, &theta0, Schedule::Inril(m), cfg.inril_cycles, &k, run_seed)?;
                let t = trace.cycles.len();
                let (lhs, rhs) = covint_sides(&trace, &k, t)?;
                report
                    .checks
                    .push(CheckRecord::at_most(format!("cov_int/{noise_tag}/pair{i}/m={m}/T={t}"), lhs, rhs));
                max_delta = max_delta.max(trace.max_implied_delta());
                inril_runs += 1;
                for s in 1..=t {
                    let (l, r) = covint_sides(&trace, &k, s)?;
                    if l > r {
                        prefix_violations += 1;
                        break;
                    }
                }
            }
        }
    }
    report.diagnostics.push(Diagnostic {
        name: "cov_int/max_implied_delta".into(),
        value: max_delta,
        note: "largest per-cycle drop of the RL gradient norm below its cycle-start value".into(),
    });
    report.diagnostics.push(Diagnostic {
        name: "cov_int/runs_violated_at_some_shorter_horizon".into(),
        value: prefix_violations as f64,
        note: format!("of {inril_runs} interleaved runs, evaluating the bound at every t < T with delta = 0"),
    });
    Ok(())
}

fn fixed_point_checks(report: &mut CheckReport) -> Result<()> {
    let pair = QuadraticPair::one_d(1.0, 1.0, 1.0, 0.0)?;
    let theta0 = DVector::from_element(1, 0.0);
    for alpha in [0.1, 0.3, 0.5] {
        for m in [1usize, 2, 5, 10] {
            let k = TheoryConstants::exact(&pair, &theta0, alpha, alpha)?;
            let trace = run_schedule(&pair, &theta0, Schedule::Inril(m), 400, &k, 0)?;
            let sim = trace.final_theta[0];
            report
                .checks
                .push(CheckRecord::close(format!("fixed_point/alpha={alpha}/m={m}"), sim, fixed_point_1d(alpha, m), 1e-9));
        }
    }
    Ok(())
}

fn efficiency_checks(report: &mut CheckReport) -> Result<()> {
    for (m, beta) in [(3.0, 0.25), (4.0, 0.2)] {
        let e = efficiency_ratio(m, beta, 1.0)?;
        report.checks.push(CheckRecord::close(format!("break_even/m={m}/beta={beta}"), e.ratio, 1.0, 1e-12));
    }
    for m in [1.0, 3.0, 15.0, 1000.0] {
        let e = efficiency_ratio(m, 0.0, 2.0)?;
        report.checks.push(CheckRecord {
            name: format!("no_benefit_ratio/m={m}"),
            lhs: e.ratio,
            rhs: 1.0,
            pass: e.ratio < 1.0,
            margin: 1.0 - e.ratio,
        });
    }
    Ok(())
}

fn rho_checks(cfg: &SuiteConfig, report: &mut CheckReport) -> Result<()> {
    let opts = pair_options(cfg, 0.0, Relation::Independent);
    for i in 0..cfg.n_pairs.min(4) {
        let (pair, theta0) = QuadraticPair::random(&opts, derive_seed(cfg.seed, stream::THEORY_INSTANCE, 100 + i as u64))?;
        let k = TheoryConstants::exact(&pair, &theta0, 0.5, 0.5)?;
        let trace = run_schedule(&pair, &theta0, Schedule::Inril(2), 50, &k, 0)?;
        let mut worst: f64 = 0.0;
        for c in &trace.cycles {
            let step = trace.steps.iter().find(|s| s.cycle == c.cycle).expect("every cycle has steps");
            let theta = DVector::from_vec(step.theta.clone());
            let (gi, gr) = (pair.a_il() * (&theta - pair.b_il()), pair.a_rl() * (&theta - pair.b_rl()));
            let analytic = if gi.norm() < 1e-12 || gr.norm() < 1e-12 { 0.0 } else { -gi.dot(&gr) / (gi.norm() * gr.norm()) };
            worst = worst.max((c.rho - analytic).abs());
        }
        report.checks.push(CheckRecord::at_most(format!("rho_analytic/pair{i}"), worst, 1e-10));
    }
    Ok(())
}

/// Configuration of the paired update-count comparison on aligned objectives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedSetup {
    pub m: usize,
    pub c_il: f64,
    pub c_rl: f64,
    pub sigma: f64,
    /// Target as a fraction of the initial squared RL gradient norm.
    pub rel_epsilon: f64,
}

impl Default for PairedSetup {
    fn default() -> Self {
        PairedSetup {
            m: 3,
            c_il: 0.9,
            c_rl: 0.3,
            sigma: 0.05,
            rel_epsilon: 1e-4,
        }
    }
}

/// One paired run: update counts plus the efficiency condition evaluated on the
/// interleaved trace up to the cycle where it reached the target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedOutcome {
    pub counts: UpdateCounts,
    pub condition: EfficiencyCondition,
}

pub fn paired_aligned_run(setup: &PairedSetup, dim: usize, batch: usize, seed: u64) -> Result<PairedOutcome> {
    let opts = RandomPairOptions {
        dim,
        relation: Relation::Aligned,
        sigma: setup.sigma,
        batch,
        ..Default::default()
    };
    let (pair, theta0) = QuadraticPair::random(&opts, seed)?;
    let k = TheoryConstants::exact(&pair, &theta0, setup.c_il, setup.c_rl)?;
    let eps = (setup.rel_epsilon * pair.grad_rl(&theta0).norm_squared()).max(2.0 * k.rl_noise_floor());
    let counts = empirical_update_counts(&pair, &theta0, &k, setup.m, eps, seed)?;
    let cycles = (counts.inril_total as usize / (setup.m + 1)).max(1);
    let trace = run_schedule(&pair, &theta0, Schedule::Inril(setup.m), cycles, &k, seed)?;
    let condition = check_efficiency_condition(&trace, &k, setup.m as f64)?;
    Ok(PairedOutcome { counts, condition })
}

fn paired_checks(cfg: &SuiteConfig, report: &mut CheckReport) -> Result<()> {
    let setup = PairedSetup::default();
    for s in 0..cfg.paired_seeds {
        let seed = derive_seed(cfg.seed, stream::THEORY_INSTANCE, 1000 + s as u64);
        let out = paired_aligned_run(&setup, cfg.dim, cfg.batch, seed)?;
        report.checks.push(CheckRecord {
            name: format!("efficiency_condition/seed{s}"),
            lhs: out.condition.lhs,
            rhs: out.condition.rhs,
            pass: out.condition.holds,
            margin: out.condition.margin,
        });
        report.checks.push(CheckRecord {
            name: format!("paired_updates/seed{s}"),
            lhs: out.counts.inril_total as f64,
            rhs: out.counts.rl_only as f64,
            pass: out.counts.inril_total < out.counts.rl_only,
            margin: out.counts.rl_only as f64 - out.counts.inril_total as f64,
        });
    }
    Ok(())
}

/// covINT on aligned pairs, where the measured benefit can exceed the whole scaled gap.
fn aligned_diagnostics(cfg: &SuiteConfig, report: &mut CheckReport) -> Result<()> {
    let opts = pair_options(cfg, 0.0, Relation::Aligned);
    let mut violated = 0usize;
    let mut runs = 0usize;
    let mut worst_ratio: f64 = 0.0;
    for i in 0..cfg.n_pairs {
        let (pair, theta0) = QuadraticPair::random(&opts, derive_seed(cfg.seed, stream::THEORY_INSTANCE, 2000 + i as u64))?;
        let c = cfg.step_constants[i % cfg.step_constants.len()];
        let k = TheoryConstants::exact(&pair, &theta0, c.0, c.1)?;
        for &m in &cfg.ms {
            let trace = run_schedule(&pair, &theta0, Schedule::Inril(m), cfg.inril_cycles, &k, 0)?;
            let t = trace.cycles.len();
            let (lhs, rhs) = covint_sides(&trace, &k, t)?;
            runs += 1;
            violated += usize::from(lhs > rhs);
            worst_ratio = worst_ratio.max(delta_il_rl(&trace, &k)? / trace.scaled_gap(&k));
        }
    }
    report.diagnostics.push(Diagnostic {
        name: "cov_int/aligned_pairs_violated".into(),
        value: violated as f64,
        note: format!("of {runs} noiseless aligned runs; the bound goes negative once Delta exceeds L * gap"),
    });
    report.diagnostics.push(Diagnostic {
        name: "cov_int/aligned_max_delta_over_gap".into(),
        value: worst_ratio,
        note: "largest measured Delta / (L_RL (L_RL(theta_0) - L*))".into(),
    });
    Ok(())
}
