//! The decision interface shared by learned and rule-based agents, and the
//! episode runner with optional per-tick trace recording.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{ActMode, PolicySnapshot};
use crate::dynamics::Behavior;
use crate::env::{Env, EnvError, EpisodeOutcome, OutcomeKind};
use crate::scenario::ScenarioInit;

pub trait Policy {
    fn name(&self) -> String;
    /// Chooses a behavior for `agent`, whose clock has just fired.
    fn act(&self, env: &Env, agent: usize, rng: &mut ChaCha8Rng) -> Behavior;
}

/// Uniformly random behavior at every decision.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn act(&self, _env: &Env, _agent: usize, rng: &mut ChaCha8Rng) -> Behavior {
        Behavior::ALL[rng.gen_range(0..Behavior::COUNT)]
    }
}

impl Policy for PolicySnapshot {
    fn name(&self) -> String {
        format!("{:?}@{}", self.learner.kind, self.epoch).to_lowercase()
    }

    fn act(&self, env: &Env, agent: usize, rng: &mut ChaCha8Rng) -> Behavior {
        let obs = env.observe(agent, self.fingerprint);
        let a = self.learner.select_action(&obs, ActMode::Eval, 0.0, rng);
        Behavior::from_index(a).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub steering: f64,
    pub acceleration: f64,
    pub behavior: Behavior,
    /// A new behavior was chosen right before this tick.
    pub decided: bool,
    pub clock: u32,
    pub active: bool,
    pub reward: f64,
}

/// One 20 Hz step of an episode, world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u32,
    pub agents: [AgentRecord; 2],
    pub outcome: OutcomeKind,
}

/// Everything needed to rebuild the episode's initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub scenario: ScenarioInit,
    pub coop: [f64; 2],
    pub env_seed: u64,
    pub policy_seed: u64,
    pub policies: [String; 2],
}

/// Plays one episode to termination. Agents are queried in index order.
pub fn run_episode(
    env: &mut Env,
    policies: [&dyn Policy; 2],
    rng: &mut ChaCha8Rng,
    mut trace: Option<&mut Vec<TickRecord>>,
) -> Result<EpisodeOutcome, EnvError> {
    while env.outcome() == OutcomeKind::Running {
        let mut decided = [false; 2];
        for i in 0..2 {
            if env.needs_decision(i) {
                let b = policies[i].act(env, i, rng);
                env.decide(i, b);
                decided[i] = true;
            }
        }
        let res = env.tick()?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(record(env, decided, res.rewards));
        }
    }
    Ok(env.episode_outcome())
}

fn record(env: &Env, decided: [bool; 2], rewards: [f64; 2]) -> TickRecord {
    let agents = [0, 1].map(|i| {
        let s = env.world_state(i);
        AgentRecord {
            x: s.x,
            y: s.y,
            heading: s.heading,
            speed: s.speed,
            steering: s.steering,
            acceleration: s.acceleration,
            behavior: env.behavior(i),
            decided: decided[i],
            clock: env.clock(i),
            active: env.is_active(i),
            reward: rewards[i],
        }
    });
    TickRecord { tick: env.tick_count(), agents, outcome: env.outcome() }
}

/// Re-simulates a recorded episode from its header, applying the recorded
/// decisions, and returns the regenerated records.
pub fn replay_trace(header: &TraceHeader, records: &[TickRecord], env_config: crate::env::EnvConfig) -> Result<(Vec<TickRecord>, EpisodeOutcome), EnvError> {
    let mut env = Env::new(env_config, header.scenario.clone(), header.coop, header.env_seed);
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let mut decided = [false; 2];
        for i in 0..2 {
            if r.agents[i].decided {
                env.decide(i, r.agents[i].behavior);
                decided[i] = true;
            }
        }
        let res = env.tick()?;
        out.push(record(&env, decided, res.rewards));
    }
    Ok((out, env.episode_outcome()))
}

/// Serializes a trace as JSON lines: the header, then one record per tick.
pub fn trace_to_jsonl(header: &TraceHeader, records: &[TickRecord]) -> String {
    let mut s = serde_json::to_string(header).expect("header serializes");
    s.push('\n');
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

pub fn trace_from_jsonl(text: &str) -> Result<(TraceHeader, Vec<TickRecord>), serde_json::Error> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = serde_json::from_str(lines.next().unwrap_or(""))?;
    let records = lines.map(serde_json::from_str).collect::<Result<Vec<_>, _>>()?;
    Ok((header, records))
}
