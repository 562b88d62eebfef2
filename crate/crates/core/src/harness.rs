//! Run configuration, training orchestration with checkpoints, and
//! evaluation over cooperativeness grids on persisted test sets.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::algorithms::training::desk_hyperparams;
use crate::algorithms::{EpochMetrics, Hyperparams, LearnerKind, PolicySnapshot, Trainer, TrainingSchedule};
use crate::env::{Env, EnvConfig, EnvError, OutcomeKind};
use crate::policy::{run_episode, Policy};
use crate::scenario::TestSet;

pub const COOP_VALUES: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Env(#[from] EnvError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRange {
    pub start: u32,
    pub end: u32,
    pub stride: u32,
}

impl SnapshotRange {
    pub fn epochs(&self) -> Vec<u32> {
        (self.start..=self.end).step_by(self.stride.max(1) as usize).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub learner: LearnerKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub snapshots: SnapshotRange,
    pub hyper: Hyperparams,
    pub schedule: TrainingSchedule,
    pub env: EnvConfig,
}

impl RunConfig {
    pub fn full(learner: LearnerKind, seed: u64) -> Self {
        Self {
            learner,
            seed,
            output_dir: PathBuf::from("runs").join(format!("{learner:?}-{seed}").to_lowercase()),
            snapshots: SnapshotRange { start: 1500, end: 2500, stride: 100 },
            hyper: Hyperparams::default(),
            schedule: TrainingSchedule::full(),
            env: EnvConfig::default(),
        }
    }

    pub fn desk(learner: LearnerKind, seed: u64) -> Self {
        Self {
            snapshots: SnapshotRange { start: 200, end: 300, stride: 50 },
            hyper: desk_hyperparams(),
            schedule: TrainingSchedule::desk(),
            ..Self::full(learner, seed)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let c: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        let s = &self.schedule;
        let h = &self.hyper;
        if s.epochs == 0 || s.n_envs == 0 {
            return bad("epochs and n_envs must be positive");
        }
        if h.alpha <= 0.0 || h.lr <= 0.0 || h.batch_size == 0 || h.target_sync == 0 {
            return bad("alpha, lr, batch_size and target_sync must be positive");
        }
        if !(0.0..=1.0).contains(&h.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if s.replay_capacity < h.batch_size {
            return bad("replay capacity smaller than a batch");
        }
        let (lo, hi) = self.env.decision_interval;
        if lo == 0 || lo > hi {
            return bad("decision interval must be a non-empty range of positive ticks");
        }
        Ok(())
    }

    /// Short digest of every setting that influences results (the output
    /// location is excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub snapshot: PolicySnapshot,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Format { path: path.to_path_buf(), msg: e.to_string() })
    }
}

pub fn checkpoint_path(run_dir: &Path, epoch: u32) -> PathBuf {
    run_dir.join("checkpoints").join(format!("epoch_{epoch:05}.json"))
}

/// Trains per `config`, writing `config.toml`, `metrics.csv` and the
/// snapshot checkpoints under the output directory. `on_epoch` sees every
/// epoch's metrics.
pub fn train(config: &RunConfig, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<PolicySnapshot, HarnessError> {
    config.validate()?;
    let dir = &config.output_dir;
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, config.to_toml()).map_err(io_err(&cfg_path))?;
    let hash = config.hash();
    let snap_epochs = config.snapshots.epochs();
    let mut trainer = Trainer::new(config.learner, config.hyper.clone(), config.schedule.clone(), config.env.clone(), config.seed)?;
    let metrics_path = dir.join("metrics.csv");
    let mut metrics = fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    writeln!(metrics, "{},config_hash", EpochMetrics::CSV_HEADER).map_err(io_err(&metrics_path))?;
    while !trainer.is_finished() {
        let m = trainer.run_epoch()?;
        on_epoch(&m);
        writeln!(metrics, "{},{hash}", m.csv_row()).map_err(io_err(&metrics_path))?;
        if snap_epochs.contains(&trainer.epoch) || trainer.is_finished() {
            let ck = Checkpoint { config_hash: hash.clone(), snapshot: trainer.snapshot() };
            ck.save(&checkpoint_path(dir, trainer.epoch))?;
        }
    }
    Ok(trainer.snapshot())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub c_ego: f64,
    pub c_opp: f64,
    pub episodes: u32,
    pub successes: u32,
    pub collisions: u32,
    pub timeouts: u32,
    /// Sum of the ego's goal-crossing times over successful episodes.
    pub traversal_sum: f64,
}

impl GridCell {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.episodes.max(1) as f64
    }

    /// Mean ego traversal time over successful episodes; NaN without any.
    pub fn mean_traversal_time(&self) -> f64 {
        if self.successes == 0 {
            f64::NAN
        } else {
            self.traversal_sum / self.successes as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub cells: Vec<GridCell>,
    pub config_hash: String,
}

impl EvalGrid {
    pub const CSV_HEADER: &'static str = "c_ego,c_opp,success_rate,mean_traversal_time,episodes,config_hash";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for c in &self.cells {
            let _ = writeln!(s, "{},{},{},{},{},{}", c.c_ego, c.c_opp, c.success_rate(), c.mean_traversal_time(), c.episodes, self.config_hash);
        }
        s
    }

    pub fn cell(&self, c_ego: f64, c_opp: f64) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.c_ego == c_ego && c.c_opp == c_opp)
    }

    pub fn mean_success(&self) -> f64 {
        self.cells.iter().map(GridCell::success_rate).sum::<f64>() / self.cells.len().max(1) as f64
    }
}

/// Per-scenario seeds shared by every cell, so cells differ only in the
/// cooperativeness pair.
pub fn episode_seeds(eval_seed: u64, index: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
    rng.set_stream(index as u64);
    (rng.gen(), rng.gen())
}

/// Success and traversal statistics for one cooperativeness pair.
pub fn evaluate_cell(
    a: &dyn Policy,
    b: &dyn Policy,
    test_set: &TestSet,
    coop: [f64; 2],
    env_config: &EnvConfig,
    eval_seed: u64,
) -> Result<GridCell, EnvError> {
    let mut cell = GridCell { c_ego: coop[0], c_opp: coop[1], episodes: 0, successes: 0, collisions: 0, timeouts: 0, traversal_sum: 0.0 };
    for (k, scenario) in test_set.scenarios.iter().enumerate() {
        let (env_seed, policy_seed) = episode_seeds(eval_seed, k);
        let mut env = Env::new(env_config.clone(), scenario.clone(), coop, env_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(policy_seed);
        let out = run_episode(&mut env, [a, b], &mut rng, None)?;
        cell.episodes += 1;
        match out.kind {
            OutcomeKind::Success => {
                cell.successes += 1;
                cell.traversal_sum += out.traversal_time[0].unwrap_or(f64::NAN);
            }
            OutcomeKind::Collision => cell.collisions += 1,
            OutcomeKind::Timeout => cell.timeouts += 1,
            OutcomeKind::Running => unreachable!("episode returned while running"),
        }
    }
    Ok(cell)
}

/// Policy `a` drives agent 0 with `c_ego`, policy `b` agent 1 with `c_opp`;
/// self-play passes the same policy twice.
pub fn evaluate_matrix(
    a: &dyn Policy,
    b: &dyn Policy,
    test_set: &TestSet,
    coop_values: &[f64],
    env_config: &EnvConfig,
    eval_seed: u64,
    config_hash: &str,
) -> Result<EvalGrid, EnvError> {
    let mut cells = Vec::with_capacity(coop_values.len() * coop_values.len());
    for &ce in coop_values {
        for &co in coop_values {
            cells.push(evaluate_cell(a, b, test_set, [ce, co], env_config, eval_seed)?);
        }
    }
    Ok(EvalGrid { cells, config_hash: config_hash.to_string() })
}

/// `(performance, spread)` in percent: mean cell success and the max-min
/// range across cells.
pub fn performance_spread(grid: &EvalGrid) -> (f64, f64) {
    let rates: Vec<f64> = grid.cells.iter().map(GridCell::success_rate).collect();
    let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    (100.0 * grid.mean_success(), 100.0 * (max - min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// `(epoch, performance, spread)` per checkpoint.
    pub checkpoints: Vec<(u32, f64, f64)>,
    pub mean_performance: f64,
    pub mean_spread: f64,
}

/// Self-play evaluation of every checkpoint in the range, averaged.
pub fn snapshot_sweep(
    run_dir: &Path,
    range: SnapshotRange,
    test_set: &TestSet,
    coop_values: &[f64],
    env_config: &EnvConfig,
    eval_seed: u64,
) -> Result<SweepResult, HarnessError> {
    let mut checkpoints = Vec::new();
    for epoch in range.epochs() {
        let ck = Checkpoint::load(&checkpoint_path(run_dir, epoch))?;
        let p = &ck.snapshot;
        let grid = evaluate_matrix(p, p, test_set, coop_values, env_config, eval_seed, &ck.config_hash)?;
        let (perf, spread) = performance_spread(&grid);
        checkpoints.push((epoch, perf, spread));
    }
    let n = checkpoints.len().max(1) as f64;
    Ok(SweepResult {
        mean_performance: checkpoints.iter().map(|c| c.1).sum::<f64>() / n,
        mean_spread: checkpoints.iter().map(|c| c.2).sum::<f64>() / n,
        checkpoints,
    })
}

pub fn save_test_set(test_set: &TestSet, path: &Path) -> Result<(), HarnessError> {
    let text = serde_json::to_string(test_set).expect("test set serializes");
    fs::write(path, text).map_err(io_err(path))
}

pub fn load_test_set(path: &Path) -> Result<TestSet, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Format { path: path.to_path_buf(), msg: e.to_string() })
}
