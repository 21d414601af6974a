use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use inril_core::envs::EnvKind;
use inril_core::harness::{
    cmd_finetune, cmd_gen_demos, cmd_plot, cmd_pretrain, cmd_sweep_m, cmd_theory_check, output_root, summarize_sweep,
    FinetuneArgs, FinetuneInit, MValue, PretrainArgs, RunConfig, SmoothingSpec, SweepArgs, SweepSpec, BEST_CKPT,
};
use inril_core::interleave::{MSpec, Mode};
use inril_core::theory::SuiteConfig;
use inril_core::Error;

#[derive(Parser, Debug)]
#[command(name = "inril", version, about = "Interleaved imitation and reinforcement learning fine-tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Roll out the scripted expert and write a demonstration file.
    GenDemos {
        #[command(flatten)]
        run: RunArgs,
        /// Output file [default: $INRIL_OUT/demos/<env>_s<seed>.txt].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Behavior-cloning pretraining from a demonstration file.
    Pretrain {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        demos: PathBuf,
        /// Output directory [default: $INRIL_OUT/pretrain/<env>_s<seed>].
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Number of IL steps (overrides il.pretrain_steps).
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from the directory's last checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Fine-tune with interleaved IL and RL updates.
    Finetune {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        init: InitArgs,
        #[arg(long)]
        demos: PathBuf,
        /// Output directory [default: $INRIL_OUT/finetune/<mode>_m<m>_s<seed>].
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// full_net_surgery, full_net_naive, network_separation, rl_only, il_only or bc_loss_reg.
        #[arg(long)]
        mode: Option<String>,
        /// RL updates per IL update, or "adaptive".
        #[arg(long)]
        m: Option<String>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Fine-tune over a grid of modes, m values and seeds and summarize the logs.
    SweepM {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        init: InitArgs,
        #[arg(long, required_unless_present = "summarize_only")]
        demos: Option<PathBuf>,
        /// Comma-separated m values; "infinity" runs rl_only.
        #[arg(long, value_delimiter = ',', required_unless_present = "summarize_only")]
        m: Vec<String>,
        /// Comma-separated seeds [default: the config seed].
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Comma-separated modes [default: the config mode].
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
        #[arg(long)]
        budget: Option<usize>,
        /// Parallel cells [default: available cores].
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory [default: $INRIL_OUT/sweep].
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Only rebuild the summary from existing per-run logs.
        #[arg(long)]
        summarize_only: bool,
    },
    /// Run the quadratic-testbed checks of the convergence and efficiency results.
    TheoryCheck {
        /// Suite configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Multiply every declared smoothness constant (negative control).
        #[arg(long)]
        inject_l_scale: Option<f64>,
        /// Directory for report.json [default: $INRIL_OUT/theory].
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Plot reward and IL-loss curves from run logs and write the raw curves as CSV.
    Plot {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Output directory [default: $INRIL_OUT/plots].
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Savitzky-Golay window (odd; 1 disables smoothing).
        #[arg(long, default_value_t = 1)]
        smooth_window: usize,
        /// Savitzky-Golay polynomial order.
        #[arg(long, default_value_t = 2)]
        smooth_order: usize,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run configuration (TOML); unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set rl.steps_per_batch=512 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// gridworld or pointmass.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
#[group(required = false, multiple = false)]
struct InitArgs {
    /// Pretrained checkpoint to start from.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Start from a random initialization instead of a checkpoint.
    #[arg(long)]
    scratch: bool,
}

impl InitArgs {
    fn resolve(&self) -> Result<FinetuneInit> {
        match (&self.checkpoint, self.scratch) {
            (Some(p), _) => Ok(FinetuneInit::Checkpoint(p.clone())),
            (None, true) => Ok(FinetuneInit::Scratch),
            (None, false) => Err(Error::Usage("pass --checkpoint <file> or --scratch".into()).into()),
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(env) = &args.env {
        cfg.env = env.parse::<EnvKind>()?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    for s in &args.set {
        cfg.apply_override(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDemos { run, out, force } => {
            let cfg = load_config(&run)?;
            let out = out.unwrap_or_else(|| output_root().join("demos").join(format!("{}_s{}.txt", cfg.env, cfg.seed)));
            let demos = cmd_gen_demos(&cfg, &out, force)?;
            println!("wrote {} trajectories ({} pairs) to {}", demos.n_trajectories, demos.len(), out.display());
        }
        Command::Pretrain {
            run,
            demos,
            out_dir,
            steps,
            resume,
        } => {
            let cfg = load_config(&run)?;
            let out_dir = out_dir.unwrap_or_else(|| output_root().join("pretrain").join(format!("{}_s{}", cfg.env, cfg.seed)));
            let args = PretrainArgs {
                demos,
                out_dir: out_dir.clone(),
                steps,
                resume,
            };
            let s = cmd_pretrain(&cfg, &args)?;
            println!(
                "steps {}..{}: IL loss {:.4} -> {:.4}; best eval return {:.3} (success {:.2}) at step {}; final eval return {:.3}",
                s.first_step,
                s.end_step,
                s.initial_il_loss,
                s.final_il_loss,
                s.best_eval.mean_return,
                s.best_eval.success_rate,
                s.best_step,
                s.final_eval.mean_return
            );
            println!("checkpoint: {}", out_dir.join(BEST_CKPT).display());
        }
        Command::Finetune {
            run,
            init,
            demos,
            out_dir,
            mode,
            m,
            budget,
        } => {
            let mut cfg = load_config(&run)?;
            if let Some(mode) = mode {
                cfg.mode = mode.parse::<Mode>()?;
            }
            if let Some(m) = m {
                cfg.m = m.parse::<MSpec>()?;
            }
            if let Some(b) = budget {
                cfg.budget_env_steps = b;
            }
            cfg.validate()?;
            let out_dir = out_dir.unwrap_or_else(|| {
                output_root()
                    .join("finetune")
                    .join(format!("{}_m{}_s{}", cfg.mode, cfg.m, cfg.seed))
            });
            let args = FinetuneArgs {
                init: init.resolve()?,
                demos,
                out_dir: out_dir.clone(),
            };
            let (s, _) = cmd_finetune(&cfg, &args)?;
            println!("{} cycles, {} env steps, {} updates", s.cycles, s.env_steps, s.updates);
            if let Some(f) = &s.final_checkpoint {
                println!("final checkpoint: eval return {:.3}, success {:.2}", f.eval_return, f.eval_success);
            }
            if let Some(b) = &s.best_checkpoint {
                println!(
                    "best checkpoint (cycle {}): eval return {:.3}, success {:.2}",
                    b.cycle, b.eval_return, b.eval_success
                );
            }
            println!("outputs in {}", out_dir.display());
        }
        Command::SweepM {
            run,
            init,
            demos,
            m,
            seeds,
            modes,
            budget,
            jobs,
            out_dir,
            summarize_only,
        } => {
            let out_dir = out_dir.unwrap_or_else(|| output_root().join("sweep"));
            let summary = if summarize_only {
                summarize_sweep(&out_dir)?
            } else {
                let cfg = load_config(&run)?;
                let spec = SweepSpec {
                    m_values: m.iter().map(|s| s.parse::<MValue>()).collect::<Result<_, _>>()?,
                    seeds: if seeds.is_empty() { vec![cfg.seed] } else { seeds },
                    budget: budget.unwrap_or(cfg.budget_env_steps),
                    env: cfg.env,
                    modes: if modes.is_empty() {
                        vec![cfg.mode]
                    } else {
                        modes.iter().map(|s| s.parse::<Mode>()).collect::<Result<_, _>>()?
                    },
                };
                let args = SweepArgs {
                    init: init.resolve()?,
                    demos: demos.expect("clap requires --demos"),
                    out_dir: out_dir.clone(),
                    jobs: jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
                };
                cmd_sweep_m(&cfg, &spec, &args)?
            };
            println!("{:<20} {:>8} {:>5} {:>7} {:>12} {:>12} {:>10} {:>6}", "mode", "m", "runs", "failed", "final_return", "final_il", "auc", "dd");
            let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
            for g in &summary.by_m {
                println!(
                    "{:<20} {:>8} {:>5} {:>7} {:>12} {:>12} {:>10} {:>6}",
                    g.mode.to_string(),
                    g.m.to_string(),
                    g.runs,
                    g.failed,
                    f(g.mean_final_return),
                    f(g.mean_final_il_loss),
                    f(g.mean_auc),
                    g.double_descent_runs
                );
            }
            println!("summary in {}", out_dir.join("summary.csv").display());
        }
        Command::TheoryCheck {
            config,
            inject_l_scale,
            out_dir,
        } => {
            let mut cfg = match &config {
                Some(p) => SuiteConfig::load(p)?,
                None => SuiteConfig::default(),
            };
            if inject_l_scale.is_some() {
                cfg.inject_l_scale = inject_l_scale;
            }
            let out_dir = out_dir.unwrap_or_else(|| output_root().join("theory"));
            let report = cmd_theory_check(&cfg, Some(&out_dir))?;
            println!("{}", report.to_table());
            println!("report: {}", out_dir.join("report.json").display());
            report.into_result()?;
        }
        Command::Plot {
            logs,
            out_dir,
            smooth_window,
            smooth_order,
        } => {
            let out_dir = out_dir.unwrap_or_else(|| output_root().join("plots"));
            let smoothing = SmoothingSpec {
                window: smooth_window,
                order: if smooth_window == 1 { 0 } else { smooth_order },
            };
            let out = cmd_plot(&logs, &out_dir, smoothing).context("plot failed")?;
            println!("{} rows -> {}", out.rows, out.csv.display());
            for img in &out.images {
                println!("plot: {}", img.display());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|c| c.downcast_ref::<Error>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
