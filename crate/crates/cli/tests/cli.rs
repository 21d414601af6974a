use std::path::Path;
use std::process::{Command, Output};

fn inril(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inril"))
        .args(args)
        .env("INRIL_OUT", out_root)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: [&str; 16] = [
    "--env",
    "pointmass",
    "--seed",
    "4",
    "--set",
    "m=2",
    "--set",
    "rl.steps_per_batch=64",
    "--set",
    "network.policy_hidden=[8]",
    "--set",
    "network.value_hidden=[8]",
    "--set",
    "eval.episodes=2",
    "--set",
    "demos.count=3",
];

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&inril(&["frobnicate"], dir.path())), 1);
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = inril(&["--help"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("theory-check"));
}

#[test]
fn missing_config_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = inril(&["gen-demos", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("nope.toml"));
}

#[test]
fn invalid_config_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "m = 0\n").unwrap();
    let o = inril(&["gen-demos", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    std::fs::write(&bad, "colour = 3\n").unwrap();
    assert_eq!(code(&inril(&["gen-demos", "--config", bad.to_str().unwrap()], dir.path())), 2);

    let o = inril(&["gen-demos", "--set", "rl.gamma=1.5"], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn finetune_needs_an_init() {
    let dir = tempfile::tempdir().unwrap();
    let o = inril(&["finetune", "--demos", "x.txt"], dir.path());
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("--scratch"));
}

#[test]
fn inflated_smoothness_constants_fail_theory_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("suite.toml");
    std::fs::write(&cfg, "n_pairs = 2\ninril_cycles = 200\npaired_seeds = 2\n").unwrap();
    let out = dir.path().join("t");
    let args = ["theory-check", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    let ok = inril(&args, dir.path());
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(out.join("report.json").exists());

    let mut bad = args.to_vec();
    bad.extend(["--inject-l-scale", "0.5"]);
    let o = inril(&bad, dir.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let demos = root.join("demos.txt");
    let demos_s = demos.to_str().unwrap();
    let with_tiny = |head: &[&str]| -> Vec<String> { head.iter().chain(TINY.iter()).map(|s| s.to_string()).collect() };
    let run = |args: Vec<String>| {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = inril(&refs, root);
        assert_eq!(code(&o), 0, "{:?}: {}", args, stderr(&o));
        o
    };

    run(with_tiny(&["gen-demos", "--out", demos_s]));
    let again = inril(&with_tiny(&["gen-demos", "--out", demos_s]).iter().map(String::as_str).collect::<Vec<_>>(), root);
    assert_eq!(code(&again), 1, "existing demos file must not be overwritten silently");

    let pre = root.join("pre");
    run(with_tiny(&["pretrain", "--demos", demos_s, "--out-dir", pre.to_str().unwrap(), "--steps", "20"]));
    let ckpt = pre.join("best.ckpt");
    assert!(ckpt.exists());

    let ft = root.join("ft");
    let o = run(with_tiny(&[
        "finetune",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--demos",
        demos_s,
        "--out-dir",
        ft.to_str().unwrap(),
        "--budget",
        "384",
    ]));
    assert!(String::from_utf8_lossy(&o.stdout).contains("3 cycles, 384 env steps"));

    // a budget below one cycle is a usage error
    let o = inril(
        &with_tiny(&["finetune", "--scratch", "--demos", demos_s, "--out-dir", root.join("ft2").to_str().unwrap(), "--budget", "100"])
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>(),
        root,
    );
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let sweep = root.join("sweep");
    run(with_tiny(&[
        "sweep-m",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--demos",
        demos_s,
        "--m",
        "1,infinity",
        "--seeds",
        "1,2",
        "--budget",
        "256",
        "--jobs",
        "2",
        "--out-dir",
        sweep.to_str().unwrap(),
    ]));
    let summary = std::fs::read(sweep.join("summary.csv")).unwrap();
    run(vec!["sweep-m".into(), "--summarize-only".into(), "--out-dir".into(), sweep.to_str().unwrap().into()]);
    assert_eq!(std::fs::read(sweep.join("summary.csv")).unwrap(), summary);

    let plots = root.join("plots");
    run(vec![
        "plot".into(),
        pre.join("pretrain.ndjson").to_str().unwrap().into(),
        ft.join("finetune.ndjson").to_str().unwrap().into(),
        "--out-dir".into(),
        plots.to_str().unwrap().into(),
        "--smooth-window".into(),
        "3".into(),
    ]);
    assert!(std::fs::read_dir(&plots).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));

    let o = inril(&["plot", root.join("missing.ndjson").to_str().unwrap(), "--out-dir", plots.to_str().unwrap()], root);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}
