//! The two-agent negotiation game: 20 Hz world updates, asynchronous
//! behavior decisions, egocentric observations, per-tick rewards and
//! termination.
//!
//! Each agent's vehicle state is kept in its own egocentric frame (`x`
//! forward along its driving direction from its start end, `y` from its
//! right curb). Agent 0's frame coincides with the world frame; agent 1's
//! frame is the world rotated by pi about the road center.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    behavior_setpoints, track_setpoint, Behavior, VehicleState, MAX_ACCEL, MAX_STEER, V_CRUISE,
};
use crate::geometry::{wrap_angle, Rect, Vec2};
use crate::scenario::{generate_scenario, ScenarioError, ScenarioInit, Side, Stage, START_OFFSET};
use crate::sensors::{scan, Obstacle, SensorConfig, SensorFrame, SensorWorld};

pub const MAX_COOPERATIVENESS: f64 = 0.5;
pub const FINGERPRINT_LEN: usize = 2;
/// Opponent fields appended to the observation to form the critic state.
pub const STATE_EXTRA_LEN: usize = 3;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode already terminated")]
    EpisodeOver,
    #[error("agent {0} must choose a behavior before the next tick")]
    DecisionPending(usize),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub sensors: SensorConfig,
    /// Episode length limit in ticks.
    pub max_ticks: u32,
    /// Longitudinal clearance required to count as having passed the opponent.
    pub pass_clearance: f64,
    /// Reward interaction region.
    pub interaction_distance: f64,
    /// Inclusive range of ticks between decisions.
    pub decision_interval: (u32, u32),
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            sensors: SensorConfig::default(),
            max_ticks: 1200,
            pass_clearance: 10.0,
            interaction_distance: 80.0,
            decision_interval: (4, 6),
        }
    }
}

impl EnvConfig {
    pub fn observation_len(&self) -> usize {
        self.sensors.frame_len() + 5 + FINGERPRINT_LEN
    }

    pub fn state_len(&self) -> usize {
        self.observation_len() + STATE_EXTRA_LEN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    Running,
    Success,
    Collision,
    Timeout,
}

impl OutcomeKind {
    pub fn is_terminal(self) -> bool {
        self != OutcomeKind::Running
    }
}

/// Terminal event attached to a reward evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardEvent {
    None,
    Success,
    Collision,
    Timeout,
}

/// Per-tick reward for one agent.
pub fn compute_reward(c: f64, v_ego: f64, v_opp: f64, d_opp: f64, event: RewardEvent) -> f64 {
    match event {
        RewardEvent::Success => 8.0,
        RewardEvent::Collision => -f64::max(3.0, v_ego),
        RewardEvent::Timeout => -3.0,
        RewardEvent::None if d_opp < 80.0 => ((1.0 - c) * v_ego + c * v_opp) / 10.0,
        RewardEvent::None => v_ego / 10.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub kind: OutcomeKind,
    pub ticks: u32,
    /// Seconds from episode start to each agent's goal crossing.
    pub traversal_time: [Option<f64>; 2],
    pub returns: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
struct Agent {
    state: VehicleState,
    coop: f64,
    behavior: Behavior,
    clock: u32,
    awaiting: bool,
    active: bool,
    finished_at: Option<u32>,
    ret: f64,
}

/// Result of one 20 Hz tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickResult {
    pub rewards: [f64; 2],
    /// The agent's clock fired; it needs a behavior before the next tick.
    pub decision_due: [bool; 2],
    /// The agent's trajectory ended on this tick (success, collision or the
    /// episode terminating).
    pub agent_done: [bool; 2],
    pub outcome: OutcomeKind,
}

/// Privileged geometry for rule-based policies, in the agent's own frame.
#[derive(Debug, Clone)]
pub struct WorldView {
    pub ego: VehicleState,
    pub ego_behavior: Behavior,
    pub opponent: Option<(VehicleState, Behavior)>,
    /// Parked footprints, both curbs.
    pub parked: Vec<Rect>,
    /// Sorted free intervals along the ego's right curb.
    pub right_gaps: Vec<(f64, f64)>,
    /// Sorted `[rear, front]` ranges of cars parked at the ego's right curb.
    pub right_parked: Vec<(f64, f64)>,
    /// The same for the opponent's right curb, in the opponent's frame.
    pub opponent_right_parked: Vec<(f64, f64)>,
    pub road_length: f64,
    pub road_width: f64,
    pub goal_x: f64,
}

/// Converts a state between the two egocentric frames.
pub fn to_other_frame(s: &VehicleState, length: f64, width: f64) -> VehicleState {
    VehicleState {
        x: length - s.x,
        y: width - s.y,
        heading: wrap_angle(s.heading + std::f64::consts::PI),
        ..*s
    }
}

/// Distance from the ego's front bumper to the next car parked at its right
/// curb; zero if one is already alongside the front.
pub fn next_parked_distance(right_parked: &[(f64, f64)], front_x: f64) -> Option<f64> {
    right_parked.iter().find(|(_, b)| *b > front_x).map(|(a, _)| (a - front_x).max(0.0))
}

#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    scenario: ScenarioInit,
    parked: [Vec<Rect>; 2],
    right_parked: [Vec<(f64, f64)>; 2],
    right_gaps: [Vec<(f64, f64)>; 2],
    sensor_worlds: [SensorWorld; 2],
    agents: [Agent; 2],
    tick: u32,
    outcome: OutcomeKind,
    rng: ChaCha8Rng,
}

impl Env {
    /// Evaluation reset with explicit cooperativeness values.
    pub fn new(cfg: EnvConfig, scenario: ScenarioInit, coop: [f64; 2], seed: u64) -> Self {
        let road = scenario.road;
        let w = road.width;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // agent 1 sees the scene rotated by pi about the road center
        let views = [scenario.clone(), scenario.rotated()];
        let parked = [0, 1].map(|i| views[i].parked.iter().map(|p| p.rect(&road)).collect::<Vec<Rect>>());
        let right_parked = [0, 1].map(|i| {
            let mut r: Vec<(f64, f64)> = views[i].parked_on(Side::Right).map(|p| p.x_range()).collect();
            r.sort_by(|a, b| a.0.total_cmp(&b.0));
            r
        });
        let right_gaps = [0, 1].map(|i| crate::scenario::enumerate_gaps(&views[i], Side::Right));
        let sensor_worlds = [0, 1].map(|i| SensorWorld {
            obstacles: parked[i].iter().map(|&rect| Obstacle { rect, velocity: Vec2::default() }).collect(),
            curbs: Some((0.0, w)),
        });
        let (lo, hi) = cfg.decision_interval;
        let agents = [0, 1].map(|i| Agent {
            state: views[i].agent_starts[0],
            coop: coop[i],
            behavior: Behavior::FollowShared,
            clock: rng.gen_range(lo..=hi),
            awaiting: true,
            active: true,
            finished_at: None,
            ret: 0.0,
        });
        Self { cfg, scenario, parked, right_parked, right_gaps, sensor_worlds, agents, tick: 0, outcome: OutcomeKind::Running, rng }
    }

    /// Training reset: generates the layout and samples both agents'
    /// cooperativeness uniformly on `[0, 0.5]`.
    pub fn new_training(cfg: EnvConfig, stage: Stage, seed: u64) -> Result<Self, EnvError> {
        let scenario = generate_scenario(stage, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        let coop = [rng.gen_range(0.0..=MAX_COOPERATIVENESS), rng.gen_range(0.0..=MAX_COOPERATIVENESS)];
        Ok(Self::new(cfg, scenario, coop, seed))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &ScenarioInit {
        &self.scenario
    }

    pub fn tick_count(&self) -> u32 {
        self.tick
    }

    pub fn outcome(&self) -> OutcomeKind {
        self.outcome
    }

    pub fn coop(&self, agent: usize) -> f64 {
        self.agents[agent].coop
    }

    pub fn is_active(&self, agent: usize) -> bool {
        self.agents[agent].active
    }

    pub fn needs_decision(&self, agent: usize) -> bool {
        self.outcome == OutcomeKind::Running && self.agents[agent].active && self.agents[agent].awaiting
    }

    pub fn behavior(&self, agent: usize) -> Behavior {
        self.agents[agent].behavior
    }

    pub fn clock(&self, agent: usize) -> u32 {
        self.agents[agent].clock
    }

    /// The agent's state in its own egocentric frame.
    pub fn ego_state(&self, agent: usize) -> VehicleState {
        self.agents[agent].state
    }

    /// The agent's state in the world frame.
    pub fn world_state(&self, agent: usize) -> VehicleState {
        let s = &self.agents[agent].state;
        if agent == 0 {
            *s
        } else {
            to_other_frame(s, self.scenario.road.length, self.scenario.road.width)
        }
    }

    /// Opponent state expressed in `agent`'s frame.
    fn opponent_in_frame(&self, agent: usize) -> VehicleState {
        let r = &self.scenario.road;
        to_other_frame(&self.agents[1 - agent].state, r.length, r.width)
    }

    fn opponent_distance(&self, agent: usize) -> f64 {
        if !self.agents[1 - agent].active {
            return f64::INFINITY;
        }
        (self.opponent_in_frame(agent).position() - self.agents[agent].state.position()).norm()
    }

    pub fn sensor_frame(&self, agent: usize) -> SensorFrame {
        let opp = self.agents[1 - agent].active.then(|| {
            let s = self.opponent_in_frame(agent);
            Obstacle { rect: s.footprint(), velocity: s.velocity() }
        });
        scan(&self.sensor_worlds[agent], &self.agents[agent].state, opp.as_ref(), &self.cfg.sensors)
    }

    /// Normalized egocentric observation. `fingerprint` fills the training
    /// progress slots (zeros when unused).
    pub fn observe(&self, agent: usize, fingerprint: [f64; FINGERPRINT_LEN]) -> Vec<f64> {
        let cfg = &self.cfg.sensors;
        let road = &self.scenario.road;
        let frame = self.sensor_frame(agent);
        let a = &self.agents[agent];
        let mut o = Vec::with_capacity(self.cfg.observation_len());
        for (d, s) in frame.ultrasonic_distances.iter().zip(&cfg.ultrasonic) {
            o.push(d / s.max_range);
        }
        let vel_scale = 2.0 * V_CRUISE;
        for r in &frame.radar_returns {
            o.push(r.distance / cfg.radar.max_range);
            o.push((r.relative_velocity / vel_scale).clamp(-1.0, 1.0));
        }
        o.push(a.coop);
        o.push((a.state.y / road.width).clamp(-1.0, 1.0));
        o.push((a.state.x / road.length).clamp(-1.0, 1.0));
        o.push(a.state.steering / MAX_STEER);
        o.push(a.state.acceleration / MAX_ACCEL);
        o.extend_from_slice(&fingerprint);
        o
    }

    /// Critic input: the observation followed by the opponent's
    /// cooperativeness, steering and acceleration.
    pub fn state_vector(&self, agent: usize, fingerprint: [f64; FINGERPRINT_LEN]) -> Vec<f64> {
        let mut s = self.observe(agent, fingerprint);
        self.append_state_extras(agent, &mut s);
        s
    }

    /// Appends the three privileged opponent fields to an observation.
    pub fn append_state_extras(&self, agent: usize, obs: &mut Vec<f64>) {
        let opp = &self.agents[1 - agent];
        obs.push(opp.coop);
        obs.push(opp.state.steering / MAX_STEER);
        obs.push(opp.state.acceleration / MAX_ACCEL);
    }

    pub fn world_view(&self, agent: usize) -> WorldView {
        let a = &self.agents[agent];
        let o = &self.agents[1 - agent];
        WorldView {
            ego: a.state,
            ego_behavior: a.behavior,
            opponent: o.active.then(|| (self.opponent_in_frame(agent), o.behavior)),
            parked: self.parked[agent].clone(),
            right_gaps: self.right_gaps[agent].clone(),
            right_parked: self.right_parked[agent].clone(),
            opponent_right_parked: self.right_parked[1 - agent].clone(),
            road_length: self.scenario.road.length,
            road_width: self.scenario.road.width,
            goal_x: self.goal_x(),
        }
    }

    pub fn goal_x(&self) -> f64 {
        self.scenario.road.length - START_OFFSET
    }

    /// Sets the agent's behavior and restarts its decision clock.
    pub fn decide(&mut self, agent: usize, behavior: Behavior) {
        let (lo, hi) = self.cfg.decision_interval;
        let a = &mut self.agents[agent];
        a.behavior = behavior;
        a.clock = self.rng.gen_range(lo..=hi);
        a.awaiting = false;
    }

    /// Advances the world by one 20 Hz step.
    pub fn tick(&mut self) -> Result<TickResult, EnvError> {
        if self.outcome.is_terminal() {
            return Err(EnvError::EpisodeOver);
        }
        for i in 0..2 {
            if self.needs_decision(i) {
                return Err(EnvError::DecisionPending(i));
            }
        }
        let road = self.scenario.road;
        for i in 0..2 {
            let a = &self.agents[i];
            if !a.active {
                continue;
            }
            let d = next_parked_distance(&self.right_parked[i], a.state.front_x());
            let sp = behavior_setpoints(a.behavior, d);
            let next = track_setpoint(&a.state, sp);
            self.agents[i].state = next;
        }
        self.tick += 1;
        let was_active = [self.agents[0].active, self.agents[1].active];

        let mut collided = [false; 2];
        if was_active[0] && was_active[1] {
            let r0 = self.agents[0].state.footprint();
            let r1 = self.opponent_in_frame(0).footprint();
            if r0.overlaps(&r1) {
                collided = [true, true];
            }
        }
        for i in 0..2 {
            if was_active[i] && !collided[i] {
                let fp = self.agents[i].state.footprint();
                let (lo, hi) = fp.y_extent();
                let off_road = lo < 0.0 || hi > road.width;
                collided[i] = off_road || self.parked[i].iter().any(|p| p.overlaps(&fp));
            }
        }

        let mut events = [RewardEvent::None; 2];
        let mut agent_done = [false; 2];
        let any_collision = collided.iter().any(|&c| c);
        if any_collision {
            self.outcome = OutcomeKind::Collision;
            for i in 0..2 {
                if collided[i] {
                    events[i] = RewardEvent::Collision;
                }
            }
        } else {
            let goal = self.goal_x();
            for i in 0..2 {
                if !was_active[i] {
                    continue;
                }
                let me = self.agents[i].state.x;
                let opp_x = self.opponent_in_frame(i).x;
                let passed = me - opp_x >= self.cfg.pass_clearance;
                if me >= goal && passed {
                    events[i] = RewardEvent::Success;
                }
            }
            for i in 0..2 {
                if events[i] == RewardEvent::Success {
                    self.agents[i].active = false;
                    self.agents[i].finished_at = Some(self.tick);
                    agent_done[i] = true;
                }
            }
            if self.agents.iter().all(|a| !a.active) {
                self.outcome = OutcomeKind::Success;
            } else if self.tick >= self.cfg.max_ticks {
                self.outcome = OutcomeKind::Timeout;
                for i in 0..2 {
                    if self.agents[i].active {
                        events[i] = RewardEvent::Timeout;
                    }
                }
            }
        }

        let mut rewards = [0.0; 2];
        for i in 0..2 {
            if !was_active[i] {
                continue;
            }
            let me = &self.agents[i].state;
            let opp = &self.agents[1 - i];
            let d_opp = if was_active[1 - i] { self.opponent_distance_raw(i) } else { f64::INFINITY };
            let r = match events[i] {
                RewardEvent::None if d_opp < self.cfg.interaction_distance => {
                    compute_reward(self.agents[i].coop, me.speed, opp.state.speed, d_opp, RewardEvent::None)
                }
                RewardEvent::None => compute_reward(self.agents[i].coop, me.speed, 0.0, f64::INFINITY, RewardEvent::None),
                e => compute_reward(self.agents[i].coop, me.speed, opp.state.speed, d_opp, e),
            };
            rewards[i] = r;
            self.agents[i].ret += r;
        }

        let terminal = self.outcome.is_terminal();
        let mut decision_due = [false; 2];
        for i in 0..2 {
            if !was_active[i] {
                continue;
            }
            if terminal {
                agent_done[i] = true;
                self.agents[i].active = self.agents[i].active && !terminal;
                continue;
            }
            if !self.agents[i].active {
                continue;
            }
            let a = &mut self.agents[i];
            a.clock = a.clock.saturating_sub(1);
            if a.clock == 0 {
                a.awaiting = true;
                decision_due[i] = true;
            }
        }
        Ok(TickResult { rewards, decision_due, agent_done, outcome: self.outcome })
    }

    /// Center distance that ignores whether the opponent is still active.
    fn opponent_distance_raw(&self, agent: usize) -> f64 {
        (self.opponent_in_frame(agent).position() - self.agents[agent].state.position()).norm()
    }

    pub fn episode_outcome(&self) -> EpisodeOutcome {
        EpisodeOutcome {
            kind: self.outcome,
            ticks: self.tick,
            traversal_time: [0, 1].map(|i| self.agents[i].finished_at.map(|t| t as f64 * crate::dynamics::DT)),
            returns: [self.agents[0].ret, self.agents[1].ret],
        }
    }

    /// Distance to the opponent as seen by `agent` (infinite once it left).
    pub fn distance_to_opponent(&self, agent: usize) -> f64 {
        self.opponent_distance(agent)
    }
}
