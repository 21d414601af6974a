use inril_core::theory::*;
use inril_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn random_case(sigma: f64, relation: Relation, seed: u64) -> (QuadraticPair, DVector<f64>) {
    let opts = RandomPairOptions {
        sigma,
        relation,
        ..Default::default()
    };
    QuadraticPair::random(&opts, seed).unwrap()
}

#[test]
fn default_suite_passes() {
    let report = run_check_suite(&SuiteConfig::default()).unwrap();
    println!("{}", report.to_table());
    assert!(report.all_pass(), "{:?}", report.failures().collect::<Vec<_>>());
}

#[test]
fn halved_smoothness_fails_the_suite() {
    let cfg = SuiteConfig {
        inject_l_scale: Some(0.5),
        n_pairs: 2,
        paired_seeds: 1,
        ..Default::default()
    };
    let report = run_check_suite(&cfg).unwrap();
    assert!(!report.all_pass());
    assert!(report.failures().any(|c| c.name.starts_with("constants_consistent")));
    assert!(matches!(report.into_result(), Err(Error::TheoryCheckFailed(_))));
}

#[test]
fn inconsistent_constants_are_rejected() {
    let (pair, theta0) = random_case(0.0, Relation::Independent, 1);
    let mut k = TheoryConstants::exact(&pair, &theta0, 0.5, 0.5).unwrap();
    k.l_rl *= 1.0 + 1e-6;
    let err = run_schedule(&pair, &theta0, Schedule::RlOnly, 5, &k, 0).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn one_d_fixed_point_matches_simulation() {
    let pair = QuadraticPair::one_d(1.0, 1.0, 1.0, 0.0).unwrap();
    let theta0 = DVector::from_element(1, 0.0);
    assert!((fixed_point_1d(0.5, 1) - 2.0 / 3.0).abs() < 1e-15);
    for alpha in [0.1, 0.3, 0.5] {
        for m in [1, 2, 5, 10] {
            let k = TheoryConstants::exact(&pair, &theta0, alpha, alpha).unwrap();
            let trace = run_schedule(&pair, &theta0, Schedule::Inril(m), 500, &k, 0).unwrap();
            // Oracle: iterate the scalar cycle map by hand.
            let mut x = 0.0f64;
            for _ in 0..500 {
                x *= 1.0 - alpha;
                for _ in 0..m {
                    x -= alpha * (x - 1.0);
                }
            }
            assert!((trace.final_theta[0] - x).abs() < 1e-12);
            assert!((x - fixed_point_1d(alpha, m)).abs() < 1e-9, "alpha {alpha} m {m}");
        }
    }
}

#[test]
fn noiseless_rl_only_respects_bound_at_every_horizon() {
    for seed in 0..10 {
        let (pair, theta0) = random_case(0.0, Relation::Independent, seed);
        let k = TheoryConstants::exact(&pair, &theta0, 0.7, 0.6).unwrap();
        let trace = run_schedule(&pair, &theta0, Schedule::RlOnly, 200, &k, seed).unwrap();
        let gap = k.l_rl * pair.loss_rl(&theta0);
        let mut best = f64::INFINITY;
        for t in 1..=200 {
            let g = pair.grad_rl(&DVector::from_vec(trace.steps[t - 1].theta.clone()));
            best = best.min(g.norm_squared());
            let rhs = 2.0 * gap / (0.6 * 0.7 * t as f64);
            assert!(best <= rhs, "seed {seed} t {t}");
        }
    }
}

#[test]
fn traces_are_deterministic() {
    let (pair, theta0) = random_case(0.5, Relation::Independent, 4);
    let k = TheoryConstants::exact(&pair, &theta0, 0.5, 0.5).unwrap();
    let a = run_schedule(&pair, &theta0, Schedule::Inril(3), 40, &k, 9).unwrap();
    let b = run_schedule(&pair, &theta0, Schedule::Inril(3), 40, &k, 9).unwrap();
    assert_eq!(a, b);
    let c = run_schedule(&pair, &theta0, Schedule::Inril(3), 40, &k, 10).unwrap();
    assert_ne!(a.final_theta, c.final_theta);
}

#[test]
fn trace_layout() {
    let (pair, theta0) = random_case(0.0, Relation::Independent, 2);
    let k = TheoryConstants::exact(&pair, &theta0, 0.5, 0.5).unwrap();
    let t = run_schedule(&pair, &theta0, Schedule::Inril(4), 7, &k, 0).unwrap();
    assert_eq!(t.total_updates(), 35);
    assert_eq!(t.cycles.len(), 7);
    assert!(t.steps.iter().filter(|s| s.kind == StepKind::Il).count() == 7);
    assert_eq!(t.m_bar(7), 4.0);
    let r = run_schedule(&pair, &theta0, Schedule::RlOnly, 7, &k, 0).unwrap();
    assert_eq!(r.total_updates(), 7);
    assert!(matches!(delta_il_rl(&r, &k), Err(Error::Usage(_))));
}

fn single_cycle_trace(rho: f64, gi: f64, gr: f64) -> TraceLog {
    TraceLog {
        schedule: Schedule::Inril(1),
        seed: 0,
        steps: vec![],
        cycles: vec![CycleTrace {
            cycle: 0,
            m: 1,
            rho,
            grad_il_norm: gi,
            grad_rl_norm: gr,
            loss_rl: 1.0,
            implied_delta: 0.0,
        }],
        final_theta: vec![0.0],
        initial_loss_rl: 1.0,
        optimum_rl: 0.0,
    }
}

fn unit_constants(c_il: f64, l_il: f64) -> TheoryConstants {
    TheoryConstants {
        c_il,
        c_rl: 0.5,
        l_il,
        l_rl: 1.0,
        sigma2_il: 0.0,
        sigma2_rl: 0.0,
        n_il: 1,
        n_rl: 1,
        eps_il: 0.0,
        delta: 0.0,
    }
}

#[test]
fn delta_hand_cases() {
    let k = unit_constants(0.5, 1.0);
    assert_eq!(delta_il_rl(&single_cycle_trace(-1.0, 1.0, 1.0), &k).unwrap(), 0.5);
    assert_eq!(delta_il_rl(&single_cycle_trace(0.0, 3.0, 2.0), &k).unwrap(), 0.0);
    let mut noisy = k;
    noisy.sigma2_il = 2.0;
    noisy.n_il = 4;
    // 0.25 * 2 * 1 / (2 * 1 * 4)
    assert_eq!(delta_il_rl(&single_cycle_trace(0.0, 1.0, 1.0), &noisy).unwrap(), -0.0625);
}

#[test]
fn delta_matches_recomputation_from_raw_iterates() {
    let (pair, theta0) = random_case(0.3, Relation::Independent, 8);
    let k = TheoryConstants::exact(&pair, &theta0, 0.6, 0.4).unwrap();
    let trace = run_schedule(&pair, &theta0, Schedule::Inril(2), 60, &k, 3).unwrap();
    // Oracle: rebuild every term from the stored IL-step iterates and the raw matrices.
    let mut sum = 0.0;
    let mut cycles = 0;
    for s in trace.steps.iter().filter(|s| s.kind == StepKind::Il) {
        let th = DVector::from_vec(s.theta.clone());
        let gi = pair.a_il() * (&th - pair.b_il());
        let gr = pair.a_rl() * (&th - pair.b_rl());
        let cos = gi.dot(&gr) / (gi.norm() * gr.norm());
        sum += k.c_il * cos / k.l_il * gi.norm() * gr.norm();
        cycles += 1;
    }
    let noise = k.c_il.powi(2) * pair.sigma2_il() * cycles as f64 / (2.0 * k.l_il * pair.n_il as f64);
    let expected = sum - noise;
    assert!((delta_il_rl(&trace, &k).unwrap() - expected).abs() < 1e-9 * expected.abs().max(1.0));
}

#[test]
fn efficiency_examples() {
    assert!((efficiency_ratio(3.0, 0.25, 1.0).unwrap().ratio - 1.0).abs() < 1e-12);
    assert!((efficiency_ratio(4.0, 0.2, 1.0).unwrap().ratio - 1.0).abs() < 1e-12);
    let e = efficiency_ratio(7.0, 0.0, 3.0).unwrap();
    assert_eq!(e.ratio, 7.0 / 8.0);
    assert_eq!(e.beta, 0.0);
    assert!(matches!(efficiency_ratio(3.0, 1.0, 1.0), Err(Error::Domain(_))));
    assert!(matches!(efficiency_ratio(3.0, 2.0, 1.0), Err(Error::Domain(_))));
}

#[test]
fn orthogonal_objectives_never_satisfy_the_efficiency_condition() {
    // RL acts on the first coordinate, IL on the second, and IL starts at its optimum.
    let a_rl = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
    let a_il = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]));
    let theta0 = DVector::from_vec(vec![3.0, -2.0]);
    let pair = QuadraticPair::new(a_rl, DVector::zeros(2), a_il, theta0.clone(), 0.0, 0.0, 1, 1).unwrap();
    let k = TheoryConstants::exact(&pair, &theta0, 0.5, 0.05).unwrap();
    for m in [1, 5, 50, 1000] {
        let trace = run_schedule(&pair, &theta0, Schedule::Inril(m), 30, &k, 0).unwrap();
        assert_eq!(delta_il_rl(&trace, &k).unwrap(), 0.0);
        assert!(!check_efficiency_condition(&trace, &k, m as f64).unwrap().holds);
    }
    // Pure overhead: the IL steps cost updates but do nothing.
    for m in [3, 5] {
        let c = empirical_update_counts(&pair, &theta0, &k, m, 1e-6, 0).unwrap();
        let expected = c.rl_only as f64 * (1 + m) as f64 / m as f64;
        assert!((c.inril_total as f64 / expected - 1.0).abs() < 0.1, "{c:?}");
    }
}

#[test]
fn aligned_objectives_satisfy_the_efficiency_condition_beyond_a_small_threshold() {
    let (pair, theta0) = random_case(0.0, Relation::Aligned, 5);
    let k = TheoryConstants::exact(&pair, &theta0, 0.5, 0.5).unwrap();
    let holds: Vec<bool> = (1..=10)
        .map(|m| {
            let trace = run_schedule(&pair, &theta0, Schedule::Inril(m), 50, &k, 0).unwrap();
            assert!(trace.cycles.iter().all(|c| c.rho <= 0.0));
            check_efficiency_condition(&trace, &k, m as f64).unwrap().holds
        })
        .collect();
    let threshold = holds.iter().position(|&h| h).expect("condition holds for some m <= 10") + 1;
    assert!(threshold <= 3, "threshold {threshold}");
    assert!(holds[threshold - 1..].iter().all(|&h| h));
}

#[test]
fn aligned_noiseless_interleaving_needs_fewer_updates() {
    let (pair, theta0) = random_case(0.0, Relation::Aligned, 6);
    let k = TheoryConstants::exact(&pair, &theta0, 0.9, 0.3).unwrap();
    let c = empirical_update_counts(&pair, &theta0, &k, 3, 1e-4, 0).unwrap();
    assert!(c.inril_total < c.rl_only, "{c:?}");
}

#[test]
fn target_below_noise_floor_is_unreachable() {
    let (pair, theta0) = random_case(0.5, Relation::Independent, 1);
    let k = TheoryConstants::exact(&pair, &theta0, 0.5, 0.5).unwrap();
    let floor = k.rl_noise_floor();
    assert!(floor > 0.0);
    let err = empirical_update_counts(&pair, &theta0, &k, 3, floor * 0.5, 0).unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded(_)));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn adaptive_schedule_stays_in_range() {
    let (pair, theta0) = random_case(0.2, Relation::Independent, 3);
    let k = TheoryConstants::exact(&pair, &theta0, 0.5, 0.5).unwrap();
    let trace = run_schedule(&pair, &theta0, Schedule::Adaptive { floor: 2 }, 100, &k, 1).unwrap();
    assert!(trace.cycles.iter().all(|c| (2..=50).contains(&c.m)));
    assert_eq!(trace.total_updates(), trace.cycles.iter().map(|c| c.m + 1).sum::<usize>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn efficiency_increases_in_m_and_beta(m in 1.0f64..50.0, dm in 0.01f64..10.0, beta in 0.0f64..0.9, db in 0.001f64..0.09) {
        let gap = 2.0;
        let r = efficiency_ratio(m, beta * gap, gap).unwrap().ratio;
        prop_assert!(efficiency_ratio(m + dm, beta * gap, gap).unwrap().ratio > r);
        prop_assert!(efficiency_ratio(m, (beta + db) * gap, gap).unwrap().ratio > r);
    }

    #[test]
    fn rho_matches_analytic_cosine(seed in 0u64..1000) {
        let (pair, theta0) = random_case(0.0, Relation::Independent, seed);
        let k = TheoryConstants::exact(&pair, &theta0, 0.5, 0.5).unwrap();
        let trace = run_schedule(&pair, &theta0, Schedule::Inril(2), 10, &k, 0).unwrap();
        for s in trace.steps.iter().filter(|s| s.kind == StepKind::Il) {
            let th = DVector::from_vec(s.theta.clone());
            let gi = pair.a_il() * (&th - pair.b_il());
            let gr = pair.a_rl() * (&th - pair.b_rl());
            let rho = -gi.dot(&gr) / (gi.norm() * gr.norm());
            prop_assert!((trace.cycles[s.cycle].rho - rho).abs() < 1e-10);
        }
    }
}
