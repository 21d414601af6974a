mod common;

use common::*;
use inril_core::interleave::{dual_cone_combine, measure_alignment, run_inril, MSpec, Mode, RunStatus};
use inril_core::nnkit::ParamVector;
use inril_core::Error;
use proptest::prelude::*;

fn pv(v: &[f64]) -> ParamVector {
    ParamVector::from_vec(v.to_vec())
}

#[test]
fn dual_cone_hand_examples() {
    assert_eq!(dual_cone_combine(&pv(&[1.0, 0.0]), &pv(&[-1.0, 1.0])).as_slice(), &[0.5, 1.5]);
    assert_eq!(dual_cone_combine(&pv(&[1.0, 0.0]), &pv(&[1.0, 1.0])).as_slice(), &[2.0, 1.0]);
    assert_eq!(dual_cone_combine(&pv(&[0.0, 0.0]), &pv(&[-1.0, 1.0])).as_slice(), &[-1.0, 1.0]);
}

#[test]
fn dual_cone_contract_on_random_pairs() {
    let (worst_abs, worst_rel, passthrough) = dual_cone_check(1000, &[2, 64, 1024], 7);
    assert!(worst_abs <= 1e-10, "worst violation {worst_abs:e}");
    assert!(worst_rel <= 1e-12, "worst normalized violation {worst_rel:e}");
    assert!(passthrough);
}

#[test]
fn schedule_accounting_is_exact() {
    for m in [1, 3, 5, 15] {
        schedule_check(m).unwrap();
    }
}

#[test]
fn rl_only_is_the_plain_rl_loop() {
    for seed in [0, 1, 2] {
        rl_only_matches_plain_loop(seed).unwrap();
    }
}

#[test]
fn network_separation_never_crosses_networks() {
    for seed in [0, 5] {
        separation_check(seed).unwrap();
    }
}

#[test]
fn zero_il_rate_surgery_equals_rl_only() {
    let setup = small_run(2);
    let budget = 5 * 3 * setup.rl_cfg.steps_per_batch;
    let mut surgery = interleave_cfg(Mode::FullNetSurgery, 3);
    surgery.alpha_il = 0.0;
    let a = setup.run(&surgery, budget, 4);
    let b = setup.run(&interleave_cfg(Mode::RlOnly, 3), budget, 4);
    assert_eq!(a.policy, b.policy);
    let returns = |o: &inril_core::interleave::InrilOutcome| o.records.iter().map(|r| (r.mean_return, r.il_loss)).collect::<Vec<_>>();
    assert_eq!(returns(&a), returns(&b));
}

#[test]
fn rl_only_logs_il_loss_without_applying_it() {
    let setup = small_run(3);
    let out = setup.run(&interleave_cfg(Mode::RlOnly, 2), 3 * 2 * setup.rl_cfg.steps_per_batch, 1);
    assert!(out.records.iter().all(|r| r.il_loss.is_finite() && r.il_updates == 0));
    assert_eq!(out.records.last().unwrap().updates, 6);
}

#[test]
fn bc_loss_reg_has_no_separate_il_steps() {
    let setup = small_run(3);
    let mut cfg = interleave_cfg(Mode::BcLossReg, 2);
    cfg.bc_reg_weight = 0.5;
    let out = setup.run(&cfg, 3 * 2 * setup.rl_cfg.steps_per_batch, 1);
    let last = out.records.last().unwrap();
    assert_eq!((last.il_updates, last.rl_updates), (0, 6));
    assert!(out.records.iter().all(|r| r.rho.is_some()));
}

#[test]
fn il_only_leaves_rl_untouched() {
    let setup = small_run(3);
    let out = setup.run(&interleave_cfg(Mode::IlOnly, 2), 3 * 2 * setup.rl_cfg.steps_per_batch, 1);
    let last = out.records.last().unwrap();
    assert_eq!((last.il_updates, last.rl_updates, last.env_steps), (3, 0, 3 * 2 * 32));
}

#[test]
fn adaptive_runs_stay_in_range_and_inside_the_budget() {
    let setup = small_run(4);
    let mut cfg = interleave_cfg(Mode::FullNetSurgery, 1);
    cfg.m = MSpec::Adaptive;
    let budget = 40 * setup.rl_cfg.steps_per_batch + 5;
    let out = setup.run(&cfg, budget, 2);
    assert!(out.records.iter().all(|r| (1..=inril_core::interleave::M_MAX).contains(&r.m_used)));
    let last = out.records.last().unwrap();
    assert!(last.env_steps <= budget && budget - last.env_steps < setup.rl_cfg.steps_per_batch);
    assert!(out.schedule.rho_history.iter().all(|(_, r)| (-1.0..=1.0).contains(r)));
}

#[test]
fn budget_below_one_cycle_is_a_usage_error() {
    let s = small_run(0);
    let cfg = interleave_cfg(Mode::FullNetSurgery, 5);
    let err = run_inril(&s.pretrained, &s.demos, &s.env, &cfg, &s.rl_cfg, &s.il_cfg, 5 * 32 - 1, 0, &s.opts).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
}

#[test]
fn runs_are_reproducible() {
    let s = small_run(6);
    for mode in Mode::ALL {
        let mut cfg = interleave_cfg(mode, 2);
        if mode == Mode::BcLossReg {
            cfg.bc_reg_weight = 0.1;
        }
        let a = s.run(&cfg, 4 * 2 * 32, 8);
        let b = s.run(&cfg, 4 * 2 * 32, 8);
        assert_eq!(a.records, b.records);
        assert_eq!(a.events, b.events);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.status, RunStatus::Completed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn alignment_symmetry_and_scale_invariance(
        g in proptest::collection::vec(-10.0f64..10.0, 1..40),
        h_seed in 0u64..1000,
        c1 in 1e-3f64..1e3,
        c2 in 1e-3f64..1e3,
    ) {
        prop_assume!(g.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-6);
        let gv = pv(&g);
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        prop_assert!((measure_alignment(&gv, &gv) + 1.0).abs() < 1e-12);
        prop_assert!((measure_alignment(&gv, &pv(&neg)) - 1.0).abs() < 1e-12);
        let mut r = rng(h_seed);
        let h = normals(&mut r, g.len());
        let base = measure_alignment(&gv, &pv(&h));
        let scaled = measure_alignment(
            &pv(&g.iter().map(|x| c1 * x).collect::<Vec<_>>()),
            &pv(&h.iter().map(|x| c2 * x).collect::<Vec<_>>()),
        );
        prop_assert!((-1.0..=1.0).contains(&base));
        prop_assert!((base - scaled).abs() < 1e-12);
    }

    #[test]
    fn dual_cone_never_opposes_either_gradient(
        a in proptest::collection::vec(-5.0f64..5.0, 2..30),
        seed in 0u64..1000,
    ) {
        let mut r = rng(seed);
        let b = normals(&mut r, a.len());
        let (ga, gb) = (pv(&a), pv(&b));
        let d = dual_cone_combine(&ga, &gb);
        prop_assert!(d.dot(&ga) >= -1e-10 * (1.0 + d.norm() * ga.norm()));
        prop_assert!(d.dot(&gb) >= -1e-10 * (1.0 + d.norm() * gb.norm()));
    }
}
