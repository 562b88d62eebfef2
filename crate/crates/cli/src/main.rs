use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use bilane::algorithms::LearnerKind;
use bilane::baselines::{ReachabilityPolicy, ThresholdPolicy};
use bilane::env::{Env, EnvConfig};
use bilane::harness::{
    evaluate_matrix, load_test_set, performance_spread, save_test_set, snapshot_sweep, train, Checkpoint, RunConfig, SnapshotRange, COOP_VALUES,
};
use bilane::policy::{replay_trace, run_episode, trace_from_jsonl, trace_to_jsonl, Policy, RandomPolicy, TraceHeader};
use bilane::scenario::{Stage, TestSet};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "bilane", about = "Bidirectional lane negotiation: training and evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a learner from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a default run config.
    InitConfig {
        #[arg(long, default_value = "dasac")]
        learner: LearnerKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the single-core desk preset.
        #[arg(long)]
        desk: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate checkpoints over a cooperativeness grid.
    EvalMatrix {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Opponent checkpoint; defaults to self-play.
        #[arg(long)]
        opponent: Option<PathBuf>,
        #[arg(long)]
        test_set: PathBuf,
        #[arg(long, value_delimiter = ',')]
        coop: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average self-play performance over a checkpoint range.
    Sweep {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        start: u32,
        #[arg(long)]
        end: u32,
        #[arg(long, default_value_t = 100)]
        stride: u32,
        #[arg(long)]
        test_set: PathBuf,
        #[arg(long, value_delimiter = ',')]
        coop: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a rule-based or random policy in self-play.
    Baseline {
        /// threshold, reachability or random
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 90.0)]
        threshold: f64,
        #[arg(long)]
        test_set: PathBuf,
        #[arg(long, value_delimiter = ',')]
        coop: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a persisted scenario test set.
    GenTestset {
        #[arg(long)]
        stage: Stage,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Record one episode as JSON lines.
    Trace {
        /// Learned policy; omit to use --baseline.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        test_set: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 0.0)]
        c_ego: f64,
        #[arg(long, default_value_t = 0.0)]
        c_opp: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-simulate a trace and check it reproduces.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn baseline(name: &str, threshold: f64) -> Result<Box<dyn Policy>> {
    Ok(match name {
        "threshold" => Box::new(ThresholdPolicy { d_threshold: threshold }),
        "reachability" => Box::new(ReachabilityPolicy::default()),
        "random" => Box::new(RandomPolicy),
        other => bail!("unknown baseline `{other}` (expected threshold, reachability or random)"),
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            let total = cfg.schedule.epochs;
            train(&cfg, |m| {
                eprintln!(
                    "epoch {}/{} stage {:?} loss {:.4} return {:.3} success {:.3} episodes {}",
                    m.epoch + 1,
                    total,
                    m.stage,
                    m.critic_loss,
                    m.mean_return,
                    m.success_rate,
                    m.episodes
                )
            })?;
            println!("{}", cfg.output_dir.display());
        }
        Cmd::InitConfig { learner, seed, desk, out } => {
            let cfg = if desk { RunConfig::desk(learner, seed) } else { RunConfig::full(learner, seed) };
            fs::write(&out, cfg.to_toml()).with_context(|| format!("writing {}", out.display()))?;
        }
        Cmd::EvalMatrix { checkpoint, opponent, test_set, coop, seed, out } => {
            let a = Checkpoint::load(&checkpoint)?;
            let b = match opponent {
                Some(p) => Checkpoint::load(&p)?,
                None => a.clone(),
            };
            let ts = load_test_set(&test_set)?;
            let coop = coop.unwrap_or_else(|| COOP_VALUES.to_vec());
            let grid = evaluate_matrix(&a.snapshot, &b.snapshot, &ts, &coop, &EnvConfig::default(), seed, &a.config_hash)?;
            fs::write(&out, grid.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            let (perf, spread) = performance_spread(&grid);
            println!("performance {perf:.2} spread {spread:.2}");
        }
        Cmd::Sweep { run_dir, start, end, stride, test_set, coop, seed } => {
            let ts = load_test_set(&test_set)?;
            let coop = coop.unwrap_or_else(|| COOP_VALUES.to_vec());
            let cfg = RunConfig::load(&run_dir.join("config.toml"))?;
            let r = snapshot_sweep(&run_dir, SnapshotRange { start, end, stride }, &ts, &coop, &cfg.env, seed)?;
            for (e, p, s) in &r.checkpoints {
                println!("epoch {e} performance {p:.2} spread {s:.2}");
            }
            println!("mean performance {:.2} spread {:.2}", r.mean_performance, r.mean_spread);
        }
        Cmd::Baseline { name, threshold, test_set, coop, seed, out } => {
            let p = baseline(&name, threshold)?;
            let ts = load_test_set(&test_set)?;
            let coop = coop.unwrap_or_else(|| COOP_VALUES.to_vec());
            let grid = evaluate_matrix(p.as_ref(), p.as_ref(), &ts, &coop, &EnvConfig::default(), seed, &p.name())?;
            fs::write(&out, grid.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            let (perf, spread) = performance_spread(&grid);
            println!("performance {perf:.2} spread {spread:.2}");
        }
        Cmd::GenTestset { stage, count, seed, out } => {
            let ts = TestSet::generate(stage, count, seed)?;
            save_test_set(&ts, &out)?;
        }
        Cmd::Trace { checkpoint, baseline: base, test_set, index, c_ego, c_opp, seed, out } => {
            let policy: Box<dyn Policy> = match (checkpoint, base) {
                (Some(p), None) => Box::new(Checkpoint::load(&p)?.snapshot),
                (None, Some(name)) => baseline(&name, 90.0)?,
                _ => bail!("pass exactly one of --checkpoint or --baseline"),
            };
            let ts = load_test_set(&test_set)?;
            let scenario = ts.scenarios.get(index).with_context(|| format!("test set has {} scenarios", ts.len()))?.clone();
            let (env_seed, policy_seed) = bilane::harness::episode_seeds(seed, index);
            let header = TraceHeader { scenario: scenario.clone(), coop: [c_ego, c_opp], env_seed, policy_seed, policies: [policy.name(), policy.name()] };
            let mut env = Env::new(EnvConfig::default(), scenario, header.coop, env_seed);
            let mut rng = ChaCha8Rng::seed_from_u64(policy_seed);
            let mut records = Vec::new();
            let outcome = run_episode(&mut env, [policy.as_ref(), policy.as_ref()], &mut rng, Some(&mut records))?;
            fs::write(&out, trace_to_jsonl(&header, &records)).with_context(|| format!("writing {}", out.display()))?;
            println!("{:?} after {} ticks", outcome.kind, outcome.ticks);
        }
        Cmd::Replay { trace } => {
            let text = fs::read_to_string(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let (header, records) = trace_from_jsonl(&text).context("malformed trace")?;
            let (again, outcome) = replay_trace(&header, &records, EnvConfig::default())?;
            if again != records {
                bail!("replay diverged from the recorded trace");
            }
            println!("{:?} after {} ticks (reproduced)", outcome.kind, outcome.ticks);
        }
    }
    Ok(())
}
