//! Seeded outcomes of this implementation, checked against `baselines/regression.toml`.

use std::path::PathBuf;

use inril_core::envs::{EnvConfig, EnvKind};
use inril_core::harness::{cmd_gen_demos, cmd_pretrain, PretrainArgs, RunConfig};
use inril_core::nnkit::{Activation, Mlp, MlpSpec};
use inril_core::rl::{train_rl, RlConfig};
use serde::Deserialize;

#[derive(Deserialize)]
struct Baselines {
    pretrain: Vec<PretrainBaseline>,
    rl_improvement: RlBaseline,
}

#[derive(Deserialize)]
struct PretrainBaseline {
    env: EnvKind,
    seed: u64,
    eval_episodes: usize,
    success_rate: f64,
    mean_return: f64,
    min_success_rate: f64,
    tolerance: f64,
}

#[derive(Deserialize)]
struct RlBaseline {
    seeds: Vec<u64>,
    cycles: u64,
    window: usize,
    min_improved: usize,
    improvements: Vec<f64>,
    tolerance: f64,
}

fn baselines() -> Baselines {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../baselines/regression.toml");
    toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

#[test]
fn pretrained_policies_reach_their_baselines() {
    for b in baselines().pretrain {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::for_env(b.env);
        cfg.seed = b.seed;
        cfg.eval.episodes = b.eval_episodes;
        let demos = dir.path().join("demos.txt");
        cmd_gen_demos(&cfg, &demos, false).unwrap();
        let s = cmd_pretrain(
            &cfg,
            &PretrainArgs {
                demos,
                out_dir: dir.path().join("pre"),
                steps: None,
                resume: false,
            },
        )
        .unwrap();
        println!("{} seed {}: best success {} return {}", b.env, b.seed, s.best_eval.success_rate, s.best_eval.mean_return);
        assert!(s.best_eval.success_rate >= b.min_success_rate);
        assert!(s.best_eval.success_rate >= b.success_rate - b.tolerance, "{}: {:?}", b.env, s.best_eval);
        assert!(s.best_eval.mean_return >= b.mean_return - b.tolerance * b.mean_return.abs().max(1.0), "{}: {:?}", b.env, s.best_eval);
    }
}

#[test]
fn plain_rl_improves_pointmass_returns() {
    let b = baselines().rl_improvement;
    let env = EnvConfig::new(EnvKind::Pointmass);
    let cfg = RlConfig::for_env(EnvKind::Pointmass);
    let mut improved = 0;
    for (i, &seed) in b.seeds.iter().enumerate() {
        let mut policy = Mlp::new(MlpSpec::policy(2, &[64, 64], 2, Activation::Tanh).unwrap(), seed, -0.5).unwrap();
        let mut value = Mlp::new(MlpSpec::value(2, &[64, 64], Activation::Tanh).unwrap(), seed + 1000, 0.0).unwrap();
        let stats = train_rl(&mut policy, &mut value, &env, &cfg, b.cycles, seed).unwrap();
        let mean = |s: &[inril_core::rl::RlStats]| s.iter().map(|x| x.mean_return).sum::<f64>() / s.len() as f64;
        let n = stats.len();
        let delta = mean(&stats[n - b.window..]) - mean(&stats[..b.window]);
        println!("seed {seed}: return change {delta}");
        assert!(stats.iter().all(|s| s.grad_norm.is_finite()));
        improved += usize::from(delta > 0.0);
        assert!((delta - b.improvements[i]).abs() <= b.tolerance * b.improvements[i].abs().max(1.0), "seed {seed}: {delta}");
    }
    assert!(improved >= b.min_improved, "{improved} of {} seeds improved", b.seeds.len());
}
