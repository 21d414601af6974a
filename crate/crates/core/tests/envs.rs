use std::collections::VecDeque;

use inril_core::envs::{
    coverage_metric, generate_demos, oracle_reference_states, DemoDataset, DemoPair, Env, EnvConfig, EnvKind, Gridworld,
    GridworldConfig, Move, Pointmass, PointmassConfig, EXPERT_GAMMA,
};
use inril_core::Error;
use proptest::prelude::*;

/// Breadth-first shortest-path lengths to the goal, with moves into walls as self-loops.
fn bfs_to_goal(cfg: &GridworldConfig) -> Vec<Vec<usize>> {
    let n = cfg.size;
    let mut dist = vec![vec![usize::MAX; n]; n];
    dist[cfg.goal[0]][cfg.goal[1]] = 0;
    let mut queue = VecDeque::from([cfg.goal]);
    while let Some([r, c]) = queue.pop_front() {
        let d = dist[r][c];
        let nbrs = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
        for (nr, nc) in nbrs {
            if nr < n && nc < n && dist[nr][nc] == usize::MAX {
                dist[nr][nc] = d + 1;
                queue.push_back([nr, nc]);
            }
        }
    }
    dist
}

fn arb_grid() -> impl Strategy<Value = GridworldConfig> {
    (2usize..9).prop_flat_map(|n| {
        (0..n, 0..n).prop_map(move |(r, c)| GridworldConfig {
            size: n,
            goal: [r, c],
            horizon: 4 * n,
            start: None,
        })
    })
}

#[test]
fn shortest_path_return_from_origin() {
    let cfg = GridworldConfig::default();
    let v = cfg.value_iteration(EXPERT_GAMMA);
    assert_eq!(bfs_to_goal(&cfg)[0][0], 8);
    assert!((v[0][0] - EXPERT_GAMMA.powi(7)).abs() < 1e-12);
}

#[test]
fn expert_rollouts_always_succeed() {
    let env_cfg = EnvConfig::new(EnvKind::Gridworld);
    let expert = env_cfg.expert().unwrap();
    let dist = bfs_to_goal(&env_cfg.gridworld);
    let mut env = env_cfg.make().unwrap();
    for seed in 0..1000 {
        let mut obs = env.reset(seed);
        let start = env_cfg.gridworld.decode(&obs).unwrap();
        let (mut ret, mut steps) = (0.0, 0);
        loop {
            let t = env.step(&expert.action(&obs).unwrap()).unwrap();
            ret += t.reward;
            steps += 1;
            obs = t.next_obs;
            if t.done {
                assert!(t.goal_reached);
                break;
            }
        }
        assert_eq!(ret, 1.0);
        assert_eq!(steps, dist[start[0]][start[1]]);
    }
}

#[test]
fn expert_tie_break_prefers_later_moves() {
    let cfg = GridworldConfig::default();
    let ex = EnvConfig::gridworld(cfg.clone()).expert().unwrap();
    // Down and Right are both optimal at the origin.
    assert_eq!(Move::from_action(&ex.action(&cfg.encode([0, 0])).unwrap()).unwrap(), Move::Right);
    assert_eq!(Move::from_action(&ex.action(&cfg.encode([0, 4])).unwrap()).unwrap(), Move::Down);
}

#[test]
fn wall_moves_and_goal_entry() {
    let mut g = Gridworld::new(GridworldConfig::default()).unwrap();
    g.set_cell([0, 2]).unwrap();
    let t = g.step(&Move::Up.as_action()).unwrap();
    assert_eq!((g.cell(), t.reward, t.done), ([0, 2], 0.0, false));
    g.set_cell([4, 3]).unwrap();
    let t = g.step(&Move::Right.as_action()).unwrap();
    assert_eq!((g.cell(), t.reward, t.done), ([4, 4], 1.0, true));
    assert!(matches!(g.step(&[0.0, 1.0]), Err(Error::Usage(_))));
}

#[test]
fn pointmass_step_arithmetic() {
    let mut p = Pointmass::new(PointmassConfig::default()).unwrap();
    p.set_pos([0.0, 0.0]);
    let t = p.step(&[1.0, 0.0]).unwrap();
    assert!((p.pos()[0] - 0.1).abs() < 1e-15 && p.pos()[1] == 0.0);
    // Distance before the step is 1, action cost 0.01.
    assert!((t.reward - (-1.01)).abs() < 1e-15);
    p.set_pos([1.0, 0.0]);
    assert_eq!(p.step(&[0.0, 0.0]).unwrap().reward, 0.0);
}

#[test]
fn pointmass_expert_at_goal_is_idle() {
    let ex = EnvConfig::new(EnvKind::Pointmass).expert().unwrap();
    assert_eq!(ex.action(&[1.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    assert_eq!(ex.action(&[0.0, 0.0]).unwrap(), vec![1.0, 0.0]);
    let a = ex.action(&[0.8, 0.1]).unwrap();
    assert!((a[0] - 0.4).abs() < 1e-15 && (a[1] + 0.2).abs() < 1e-15);
}

#[test]
fn demo_generation_is_deterministic_and_noiseless_demos_are_expert_actions() {
    for kind in EnvKind::ALL {
        let env_cfg = EnvConfig::new(kind);
        let a = generate_demos(&env_cfg, 20, 0.0, 5).unwrap();
        let b = generate_demos(&env_cfg, 20, 0.0, 5).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.n_trajectories, 20);
        let expert = env_cfg.expert().unwrap();
        for p in &a.pairs {
            assert_eq!(p.action, expert.action(&p.obs).unwrap());
        }
        let noisy = generate_demos(&env_cfg, 20, 0.3, 5).unwrap();
        assert_eq!(noisy.to_text(), generate_demos(&env_cfg, 20, 0.3, 5).unwrap().to_text());
        assert_ne!(noisy.to_text(), generate_demos(&env_cfg, 20, 0.3, 6).unwrap().to_text());
    }
}

#[test]
fn noiseless_gridworld_demos_walk_shortest_paths() {
    let env_cfg = EnvConfig::new(EnvKind::Gridworld);
    let dist = bfs_to_goal(&env_cfg.gridworld);
    let demos = generate_demos(&env_cfg, 20, 0.0, 1).unwrap();
    for traj in 0..20 {
        let cells: Vec<[usize; 2]> = demos
            .pairs
            .iter()
            .filter(|p| p.traj == traj)
            .map(|p| env_cfg.gridworld.decode(&p.obs).unwrap())
            .collect();
        let d0 = dist[cells[0][0]][cells[0][1]];
        assert_eq!(cells.len(), d0);
        for (i, c) in cells.iter().enumerate() {
            assert_eq!(dist[c[0]][c[1]], d0 - i);
        }
    }
}

#[test]
fn unsolvable_configuration_is_an_env_error() {
    let cfg = PointmassConfig {
        horizon: 1,
        ..PointmassConfig::default()
    };
    let err = generate_demos(&EnvConfig::pointmass(cfg), 3, 0.0, 0).unwrap_err();
    assert!(matches!(err, Error::Env(_)), "{err}");
}

#[test]
fn demo_files_round_trip() {
    let demos = generate_demos(&EnvConfig::new(EnvKind::Pointmass), 4, 0.2, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/demos.txt");
    demos.save(&path).unwrap();
    assert_eq!(DemoDataset::load(&path).unwrap(), demos);
    let two = demos.truncated(2).unwrap();
    assert_eq!(two.n_trajectories, 2);
    assert!(two.pairs.iter().all(|p| p.traj < 2));
    assert!(matches!(DemoDataset::parse("not a demo file\n"), Err(Error::Parse(_))));
}

#[test]
fn coverage_examples() {
    let at = |x: f64, y: f64| DemoPair {
        traj: 0,
        obs: vec![x, y],
        action: vec![0.0, 0.0],
    };
    let one = DemoDataset::from_pairs(EnvKind::Pointmass, vec![at(0.0, 0.0)], 0, 0.0).unwrap();
    assert_eq!(coverage_metric(&one, &[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap(), 2.0);
    let refs = one.states();
    assert_eq!(coverage_metric(&one, &refs).unwrap(), 0.0);
    assert!(coverage_metric(&one, &[]).is_err());
}

#[test]
fn gridworld_coverage_matches_exhaustive_scan() {
    let env_cfg = EnvConfig::new(EnvKind::Gridworld);
    let demos = generate_demos(&env_cfg, 20, 0.0, 2).unwrap();
    let refs = oracle_reference_states(&env_cfg, 200, 3).unwrap();
    let mut total = 0.0;
    for r in &refs {
        let mut best = f64::INFINITY;
        for p in &demos.pairs {
            best = best.min(((p.obs[0] - r[0]).powi(2) + (p.obs[1] - r[1]).powi(2)).sqrt());
        }
        total += best;
    }
    let expect = total / refs.len() as f64;
    assert!((coverage_metric(&demos, &refs).unwrap() - expect).abs() < 1e-12);
}

fn run_random_episode(env: &mut Env, seed: u64, actions: &[(f64, f64)], horizon: usize) -> Vec<inril_core::envs::Transition> {
    env.reset(seed);
    let mut out = Vec::new();
    for &(a, b) in actions.iter().cycle() {
        let t = env.step(&[a, b]).unwrap();
        assert!(env.step_count() <= horizon);
        let done = t.done;
        out.push(t);
        if done {
            break;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_iteration_matches_bfs(cfg in arb_grid()) {
        let v = cfg.value_iteration(EXPERT_GAMMA);
        let d = bfs_to_goal(&cfg);
        for r in 0..cfg.size {
            for c in 0..cfg.size {
                let expect = if d[r][c] == 0 { 0.0 } else { EXPERT_GAMMA.powi(d[r][c] as i32 - 1) };
                prop_assert!((v[r][c] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gridworld_episodes_respect_the_sparse_contract(
        cfg in arb_grid(),
        seed in 0u64..10_000,
        actions in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..20),
    ) {
        let horizon = cfg.horizon;
        let env_cfg = EnvConfig::gridworld(cfg);
        let mut env = env_cfg.make().unwrap();
        let start = env.reset(seed);
        let mut again = env_cfg.make().unwrap();
        prop_assert_eq!(again.reset(seed), start);
        let ep = run_random_episode(&mut env, seed, &actions, horizon);
        let last = ep.last().unwrap();
        prop_assert!(ep.iter().all(|t| t.reward == 0.0 || t.reward == 1.0));
        prop_assert!(ep[..ep.len() - 1].iter().all(|t| !t.done && t.reward == 0.0));
        prop_assert_eq!(last.reward == 1.0, last.goal_reached);
        prop_assert!(last.goal_reached || ep.len() == horizon);
        prop_assert!(env.is_terminal());
    }

    #[test]
    fn pointmass_episodes_are_reproducible(
        seed in 0u64..10_000,
        sigma in prop_oneof![Just(0.0), 0.0f64..0.1],
        actions in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..20),
    ) {
        let env_cfg = EnvConfig::pointmass(PointmassConfig { sigma_env: sigma, horizon: 30, ..PointmassConfig::default() });
        let mut a = env_cfg.make().unwrap();
        let mut b = env_cfg.make().unwrap();
        let ea = run_random_episode(&mut a, seed, &actions, 30);
        let eb = run_random_episode(&mut b, seed, &actions, 30);
        prop_assert_eq!(&ea, &eb);
        let last = ea.last().unwrap();
        prop_assert!(last.goal_reached || ea.len() == 30);
        prop_assert!(ea.iter().all(|t| t.reward.is_finite()));
    }

    #[test]
    fn pointmass_reward_decreases_with_distance(
        angle in 0.0f64..std::f64::consts::TAU,
        r1 in 0.0f64..5.0,
        dr in 1e-6f64..5.0,
        ax in -1.0f64..1.0,
        ay in -1.0f64..1.0,
    ) {
        let cfg = PointmassConfig::default();
        let reward_at = |r: f64| {
            let mut p = Pointmass::new(cfg.clone()).unwrap();
            p.set_pos([cfg.goal[0] + r * angle.cos(), cfg.goal[1] + r * angle.sin()]);
            p.step(&[ax, ay]).unwrap().reward
        };
        prop_assert!(reward_at(r1) > reward_at(r1 + dr));
    }
}
