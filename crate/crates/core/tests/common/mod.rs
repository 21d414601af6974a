#![allow(dead_code)]

use inril_core::envs::{DemoDataset, DemoPair, EnvKind, Transition};
use inril_core::nnkit::{Activation, Mlp, MlpSpec, ParamVector};
use inril_core::rl::RolloutBatch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

/// Central differences of `f` at `x`.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, or the absolute difference when both are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-8 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Random small tanh Gaussian policy: `(policy, obs_dim, act_dim)`.
pub fn random_policy(seed: u64) -> (Mlp, usize, usize) {
    let mut r = rng(seed);
    let obs_dim = r.random_range(1..=4);
    let act_dim = r.random_range(1..=3);
    let hidden: Vec<usize> = (0..r.random_range(1..=2)).map(|_| r.random_range(2..=12)).collect();
    let log_std = r.random_range(-1.0..0.5);
    let spec = MlpSpec::policy(obs_dim, &hidden, act_dim, Activation::Tanh).unwrap();
    (Mlp::new(spec, seed, log_std).unwrap(), obs_dim, act_dim)
}

pub fn random_value_net(seed: u64) -> (Mlp, usize) {
    let mut r = rng(seed ^ 0xabc);
    let obs_dim = r.random_range(1..=4);
    let hidden: Vec<usize> = (0..r.random_range(1..=2)).map(|_| r.random_range(2..=12)).collect();
    let spec = MlpSpec::value(obs_dim, &hidden, Activation::Tanh).unwrap();
    (Mlp::new(spec, seed, 0.0).unwrap(), obs_dim)
}

pub fn random_demos(seed: u64, obs_dim: usize, act_dim: usize, n: usize) -> DemoDataset {
    let mut r = rng(seed ^ 0xdead);
    let pairs = (0..n)
        .map(|i| DemoPair {
            traj: i / 5,
            obs: normals(&mut r, obs_dim),
            action: normals(&mut r, act_dim),
        })
        .collect();
    DemoDataset::from_pairs(EnvKind::Pointmass, pairs, seed, 0.0).unwrap()
}

/// Random batch of transitions whose behavior log-probs come from `behavior`, with
/// random advantages filled in.
pub fn random_rollout_batch(seed: u64, behavior: &Mlp, n: usize) -> RolloutBatch {
    let mut r = rng(seed ^ 0xbeef);
    let (obs_dim, act_dim) = (behavior.obs_dim(), behavior.out_dim());
    let mut trajectories = vec![Vec::new()];
    for i in 0..n {
        let obs = normals(&mut r, obs_dim);
        let action = normals(&mut r, act_dim);
        let logp_behavior = behavior.log_prob(&obs, &action).unwrap();
        let done = i % 7 == 6 || i + 1 == n;
        trajectories.last_mut().unwrap().push(Transition {
            obs,
            action,
            reward: r.random_range(-1.0..1.0),
            next_obs: normals(&mut r, obs_dim),
            done,
            goal_reached: false,
            logp_behavior,
        });
        if done && i + 1 < n {
            trajectories.push(Vec::new());
        }
    }
    let mut batch = RolloutBatch::from_trajectories(trajectories);
    batch.advantages = normals(&mut r, n);
    batch.values = vec![0.0; n];
    batch.returns = batch.advantages.clone();
    batch
}

pub fn with_params(net: &Mlp, p: &[f64]) -> Mlp {
    let mut out = net.clone();
    out.set_params(ParamVector::from_vec(p.to_vec())).unwrap();
    out
}

/// Relative error between the analytic mini-batch IL gradient and central differences on
/// a random policy and random demonstrations.
pub fn il_fd_error(seed: u64) -> f64 {
    use inril_core::il::il_loss_and_grad_on;
    let (policy, obs_dim, act_dim) = random_policy(seed);
    let n = 5 + (seed as usize % 20);
    let demos = random_demos(seed, obs_dim, act_dim, n);
    let idx: Vec<usize> = (0..n).step_by(2).collect();
    let (_, grad) = il_loss_and_grad_on(&policy, &demos, &idx).unwrap();
    let fd = fd_grad(
        |p| il_loss_and_grad_on(&with_params(&policy, p), &demos, &idx).unwrap().0,
        policy.params().as_slice(),
        FD_STEP,
    );
    rel_err(grad.as_slice(), &fd)
}

/// Same for the clipped surrogate, evaluated slightly away from the sampling point so the
/// importance ratios differ from 1 while staying inside the clip range.
pub fn rl_fd_error(seed: u64) -> f64 {
    use inril_core::envs::EnvKind;
    use inril_core::rl::{rl_loss_and_grad, RlConfig};
    let (behavior, _, _) = random_policy(seed);
    let batch = random_rollout_batch(seed, &behavior, 30);
    let mut r = rng(seed ^ 0x5eed);
    let offset: Vec<f64> = normals(&mut r, behavior.n_params()).iter().map(|x| 1e-3 * x).collect();
    let start: Vec<f64> = behavior.params().as_slice().iter().zip(&offset).map(|(a, b)| a + b).collect();
    let policy = with_params(&behavior, &start);
    let mut cfg = RlConfig::for_env(EnvKind::Pointmass);
    cfg.normalize_advantages = seed % 2 == 0;
    for t in batch.transitions() {
        let ratio = (policy.log_prob(&t.obs, &t.action).unwrap() - t.logp_behavior).exp();
        assert!((ratio - 1.0).abs() < 0.5 * cfg.clip_eps, "ratio {ratio} too close to the clip boundary");
    }
    let (_, grad) = rl_loss_and_grad(&policy, &batch, &cfg).unwrap();
    let fd = fd_grad(|p| rl_loss_and_grad(&with_params(&policy, p), &batch, &cfg).unwrap().0, &start, FD_STEP);
    rel_err(grad.as_slice(), &fd)
}

/// Same for the mean squared value loss `mean 0.5 (V(s) - target)^2` over random states.
pub fn value_fd_error(seed: u64) -> f64 {
    let (net, obs_dim) = random_value_net(seed);
    let mut r = rng(seed ^ 0x7a1);
    let samples: Vec<(Vec<f64>, f64)> = (0..12).map(|_| (normals(&mut r, obs_dim), r.sample(StandardNormal))).collect();
    let loss_and_grad = |m: &Mlp| {
        let mut grad = vec![0.0; m.n_params()];
        let mut loss = 0.0;
        for (obs, target) in &samples {
            let (l, g) = m.value_forward_and_grad(obs, *target).unwrap();
            loss += l / samples.len() as f64;
            for (a, b) in grad.iter_mut().zip(g.as_slice()) {
                *a += b / samples.len() as f64;
            }
        }
        (loss, grad)
    };
    let (_, grad) = loss_and_grad(&net);
    let fd = fd_grad(|p| loss_and_grad(&with_params(&net, p)).0, net.params().as_slice(), FD_STEP);
    rel_err(&grad, &fd)
}

/// Small pointmass fine-tuning problem for schedule-level checks.
pub struct SmallRun {
    pub pretrained: Mlp,
    pub demos: DemoDataset,
    pub env: inril_core::envs::EnvConfig,
    pub rl_cfg: inril_core::rl::RlConfig,
    pub il_cfg: inril_core::il::IlBatchConfig,
    pub opts: inril_core::interleave::RunOptions,
}

pub fn small_run(seed: u64) -> SmallRun {
    use inril_core::envs::{generate_demos, EnvConfig};
    let env = EnvConfig::new(EnvKind::Pointmass);
    let mut rl_cfg = inril_core::rl::RlConfig::for_env(EnvKind::Pointmass);
    rl_cfg.steps_per_batch = 32;
    rl_cfg.value_epochs = 2;
    let opts = inril_core::interleave::RunOptions {
        value_hidden: vec![8],
        residual_hidden: vec![6],
        record_events: true,
        ..Default::default()
    };
    SmallRun {
        pretrained: Mlp::new(MlpSpec::policy(2, &[12], 2, Activation::Tanh).unwrap(), seed, -0.5).unwrap(),
        demos: generate_demos(&env, 3, 0.1, seed).unwrap(),
        env,
        rl_cfg,
        il_cfg: inril_core::il::IlBatchConfig {
            batch_size: 16,
            lr: 0.0,
            shuffle_seed: seed,
        },
        opts,
    }
}

impl SmallRun {
    pub fn run(&self, cfg: &inril_core::interleave::InterleaveConfig, budget: usize, seed: u64) -> inril_core::interleave::InrilOutcome {
        inril_core::interleave::run_inril(&self.pretrained, &self.demos, &self.env, cfg, &self.rl_cfg, &self.il_cfg, budget, seed, &self.opts).unwrap()
    }
}

pub fn interleave_cfg(mode: inril_core::interleave::Mode, m: usize) -> inril_core::interleave::InterleaveConfig {
    inril_core::interleave::InterleaveConfig {
        mode,
        m: inril_core::interleave::MSpec::Fixed(m),
        alpha_il: 1e-2,
        alpha_rl: 1e-2,
        ..Default::default()
    }
}

/// Largest violation of `<d, g_il> >= 0`, `<d, g_rl> >= 0` over random pairs (half of them
/// forced into conflict), absolute and normalized by the norms, and whether every
/// non-conflicting pair came back as the exact sum.
pub fn dual_cone_check(pairs_per_dim: usize, dims: &[usize], seed: u64) -> (f64, f64, bool) {
    use inril_core::interleave::dual_cone_combine;
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut passthrough = true;
    for &dim in dims {
        for i in 0..pairs_per_dim {
            let a = normals(&mut r, dim);
            let mut b = normals(&mut r, dim);
            let scale: f64 = 10f64.powf(r.random_range(-3.0..3.0));
            b.iter_mut().for_each(|x| *x *= scale);
            let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            if (i % 2 == 0) == (dot > 0.0) {
                b.iter_mut().for_each(|x| *x = -*x);
            }
            let (ga, gb) = (ParamVector::from_vec(a), ParamVector::from_vec(b));
            let d = dual_cone_combine(&ga, &gb);
            if ga.dot(&gb) >= 0.0 {
                let sum: Vec<f64> = ga.as_slice().iter().zip(gb.as_slice()).map(|(x, y)| x + y).collect();
                passthrough &= d.as_slice() == sum.as_slice();
            } else {
                worst_abs = worst_abs.max(-d.dot(&ga)).max(-d.dot(&gb));
                let s = d.norm().max(1e-300);
                worst = worst.max(-d.dot(&ga) / (s * ga.norm())).max(-d.dot(&gb) / (s * gb.norm()));
            }
        }
    }
    (worst_abs, worst, passthrough)
}

/// Exact schedule accounting for fixed `m`: four whole cycles fit the budget with room to
/// spare for less than one more.
pub fn schedule_check(m: usize) -> std::result::Result<(), String> {
    use inril_core::interleave::{Mode, UpdateKind};
    let setup = small_run(1);
    let n = setup.rl_cfg.steps_per_batch;
    let budget = 4 * m * n + m * n - 1;
    for mode in [Mode::FullNetSurgery, Mode::FullNetNaive, Mode::NetworkSeparation] {
        let out = setup.run(&interleave_cfg(mode, m), budget, 3);
        if out.records.len() != 4 {
            return Err(format!("{mode} m={m}: {} cycles instead of 4", out.records.len()));
        }
        for (t, rec) in out.records.iter().enumerate() {
            let c = t + 1;
            let expect = (c * m * n, c * (1 + m), c, c * m, m);
            let got = (rec.env_steps, rec.updates, rec.il_updates, rec.rl_updates, rec.m_used);
            if got != expect {
                return Err(format!("{mode} m={m} cycle {t}: got {got:?}, expected {expect:?}"));
            }
        }
        let pattern: Vec<UpdateKind> = out.events.iter().map(|e| e.kind).collect();
        let expect: Vec<UpdateKind> = (0..4)
            .flat_map(|_| std::iter::once(UpdateKind::Il).chain(std::iter::repeat_n(UpdateKind::Rl, m)))
            .collect();
        if pattern != expect {
            return Err(format!("{mode} m={m}: update pattern differs"));
        }
    }
    Ok(())
}

/// `rl_only` run versus the plain RL loop with the same seeds and value network.
pub fn rl_only_matches_plain_loop(seed: u64) -> std::result::Result<(), String> {
    use inril_core::interleave::Mode;
    use inril_core::rl::train_rl;
    use inril_core::seed::{derive_seed, stream};
    let setup = small_run(seed);
    let cfg = interleave_cfg(Mode::RlOnly, 3);
    let n = setup.rl_cfg.steps_per_batch;
    let out = setup.run(&cfg, 5 * 3 * n, seed);
    let mut policy = setup.pretrained.clone();
    let mut value = Mlp::new(MlpSpec::value(2, &setup.opts.value_hidden, Activation::Tanh).unwrap(), derive_seed(seed, stream::INIT_VALUE, 0), 0.0).unwrap();
    let mut rl_cfg = setup.rl_cfg.clone();
    rl_cfg.lr = cfg.alpha_rl;
    let stats = train_rl(&mut policy, &mut value, &setup.env, &rl_cfg, 15, seed).map_err(|e| e.to_string())?;
    if out.policy.base().params().as_slice() != policy.params().as_slice() {
        return Err("policy parameters differ".into());
    }
    if out.value.params().as_slice() != value.params().as_slice() {
        return Err("value parameters differ".into());
    }
    let steps: usize = stats.iter().map(|s| s.env_steps).sum();
    if out.records.last().map(|r| r.env_steps) != Some(steps) {
        return Err("env-step totals differ".into());
    }
    Ok(())
}

/// Digest bookkeeping over a full network-separation run, plus a replay of the IL steps
/// on the base alone.
pub fn separation_check(seed: u64) -> std::result::Result<(), String> {
    use inril_core::il::{batch_indices, il_loss_and_grad_on};
    use inril_core::interleave::{Mode, ResidualPolicyPair, UpdateKind};
    use inril_core::seed::{derive_seed, stream};
    let setup = small_run(seed);
    let cfg = interleave_cfg(Mode::NetworkSeparation, 4);
    let out = setup.run(&cfg, 6 * 4 * setup.rl_cfg.steps_per_batch, seed);
    let fresh = ResidualPolicyPair::new(
        setup.pretrained.clone(),
        &setup.opts.residual_hidden,
        setup.opts.activation,
        derive_seed(seed, stream::INIT_RESIDUAL, 0),
    )
    .map_err(|e| e.to_string())?;
    let mut base = setup.pretrained.params().digest();
    let mut residual = fresh.residual.params().digest();
    let (mut il_moves, mut rl_moves) = (0, 0);
    for (i, e) in out.events.iter().enumerate() {
        let res = e.residual_digest.clone().ok_or("event lacks a residual digest")?;
        match e.kind {
            UpdateKind::Il => {
                if res != residual {
                    return Err(format!("IL step {i} changed the residual"));
                }
                il_moves += usize::from(e.base_digest != base);
            }
            UpdateKind::Rl => {
                if e.base_digest != base {
                    return Err(format!("RL update {i} changed the base"));
                }
                rl_moves += usize::from(res != residual);
            }
            k => return Err(format!("unexpected update kind {k:?}")),
        }
        base = e.base_digest.clone();
        residual = res;
    }
    if il_moves == 0 || rl_moves == 0 {
        return Err("no parameter movement observed; the check would be vacuous".into());
    }
    let mut replay = setup.pretrained.clone();
    let mut il_cfg = setup.il_cfg.clone();
    il_cfg.lr = cfg.alpha_il;
    for k in 0..out.records.len() as u64 {
        let idx = batch_indices(setup.demos.len(), &il_cfg, k).map_err(|e| e.to_string())?;
        let (_, g) = il_loss_and_grad_on(&replay, &setup.demos, &idx).map_err(|e| e.to_string())?;
        replay.apply_step(&g, cfg.alpha_il).map_err(|e| e.to_string())?;
    }
    if replay.params().as_slice() != out.policy.base().params().as_slice() {
        return Err("base differs from the IL-only replay".into());
    }
    Ok(())
}
