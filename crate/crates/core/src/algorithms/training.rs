//! Self-play training: curriculum-staged rollouts in a pool of
//! environments feeding one prioritized buffer, followed by a fixed number
//! of gradient steps per epoch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::learner::{ActMode, Hyperparams, Learner, LearnerKind};
use super::replay::{PrioritizedReplay, Transition};
use crate::dynamics::Behavior;
use crate::env::{Env, EnvConfig, EnvError, FINGERPRINT_LEN};
use crate::scenario::Stage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    /// Epochs spent on stage A before alternating between B and C.
    pub stage_a_epochs: u32,
    /// Length of each B or C block once alternating.
    pub alternate_every: u32,
}

impl Curriculum {
    pub fn stage(&self, epoch: u32) -> Stage {
        if epoch < self.stage_a_epochs {
            return Stage::A;
        }
        let block = (epoch - self.stage_a_epochs) / self.alternate_every.max(1);
        if block % 2 == 0 {
            Stage::B
        } else {
            Stage::C
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    pub epochs: u32,
    pub n_envs: usize,
    /// Simulation ticks advanced in every environment per epoch.
    pub ticks_per_env: u32,
    pub critic_steps_per_epoch: u32,
    pub replay_capacity: usize,
    /// Minimum buffer fill before gradient steps start.
    pub warmup: usize,
    pub priority_exponent: f64,
    pub is_exponent_start: f64,
    pub is_exponent_end: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_epochs: u32,
    pub curriculum: Curriculum,
}

impl TrainingSchedule {
    /// The long schedule: 2500 epochs, 32 environments, 2000 critic steps.
    pub fn full() -> Self {
        Self {
            epochs: 2500,
            n_envs: 32,
            ticks_per_env: 250,
            critic_steps_per_epoch: 2000,
            replay_capacity: 1_000_000,
            warmup: 10_000,
            priority_exponent: 0.6,
            is_exponent_start: 0.4,
            is_exponent_end: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_epochs: 500,
            curriculum: Curriculum { stage_a_epochs: 500, alternate_every: 1 },
        }
    }

    /// Desk-scale preset for a single core.
    pub fn desk() -> Self {
        Self {
            epochs: 300,
            n_envs: 64,
            ticks_per_env: 200,
            critic_steps_per_epoch: 1000,
            replay_capacity: 300_000,
            warmup: 2_000,
            epsilon_decay_epochs: 150,
            curriculum: Curriculum { stage_a_epochs: 300, alternate_every: 1 },
            ..Self::full()
        }
    }

    pub fn epsilon(&self, epoch: u32) -> f64 {
        let f = (epoch as f64 / self.epsilon_decay_epochs.max(1) as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f
    }

    pub fn is_exponent(&self, epoch: u32) -> f64 {
        let f = if self.epochs > 1 { epoch as f64 / (self.epochs - 1) as f64 } else { 1.0 };
        self.is_exponent_start + (self.is_exponent_end - self.is_exponent_start) * f.min(1.0)
    }
}

/// Hyperparameters matching the desk preset.
pub fn desk_hyperparams() -> Hyperparams {
    Hyperparams { hidden: vec![64, 64], batch_size: 128, ..Hyperparams::default() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub stage: Stage,
    pub critic_steps: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_return: f64,
    pub success_rate: f64,
    pub episodes: u32,
    pub epsilon: f64,
    pub alpha: f64,
    pub replay_len: usize,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str =
        "epoch,stage,critic_steps,critic_loss,actor_loss,mean_return,success_rate,episodes,epsilon,alpha,replay_len";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.stage,
            self.critic_steps,
            self.critic_loss,
            self.actor_loss,
            self.mean_return,
            self.success_rate,
            self.episodes,
            self.epsilon,
            self.alpha,
            self.replay_len
        )
    }
}

#[derive(Debug, Clone)]
struct Pending {
    state: Vec<f64>,
    action: usize,
    reward: f64,
}

#[derive(Debug, Clone)]
struct Slot {
    env: Env,
    pending: [Option<Pending>; 2],
    returns: [f64; 2],
}

/// Training-progress markers for the acting input.
pub fn fingerprint(kind: LearnerKind, epoch: u32, epochs: u32, epsilon: f64, alpha: f64) -> [f64; FINGERPRINT_LEN] {
    let progress = epoch as f64 / epochs.max(1) as f64;
    match kind {
        LearnerKind::Dqn => [progress, epsilon],
        LearnerKind::Sql => [progress, alpha],
        LearnerKind::Dasac => [0.0, 0.0],
    }
}

pub struct Trainer {
    pub learner: Learner,
    pub replay: PrioritizedReplay,
    pub schedule: TrainingSchedule,
    pub env_config: EnvConfig,
    pub epoch: u32,
    slots: Vec<Slot>,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(kind: LearnerKind, hyper: Hyperparams, schedule: TrainingSchedule, env_config: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs_len = env_config.observation_len();
        let state_len = env_config.state_len();
        let learner = Learner::new(kind, hyper, obs_len, state_len, &mut rng);
        let replay = PrioritizedReplay::new(schedule.replay_capacity, state_len, obs_len, schedule.priority_exponent);
        let stage = schedule.curriculum.stage(0);
        let mut slots = Vec::with_capacity(schedule.n_envs);
        for _ in 0..schedule.n_envs {
            let env = Env::new_training(env_config.clone(), stage, rng.gen())?;
            slots.push(Slot { env, pending: [None, None], returns: [0.0; 2] });
        }
        Ok(Self { learner, replay, schedule, env_config, epoch: 0, slots, rng })
    }

    pub fn current_fingerprint(&self) -> [f64; FINGERPRINT_LEN] {
        let eps = self.schedule.epsilon(self.epoch);
        fingerprint(self.learner.kind, self.epoch, self.schedule.epochs, eps, self.learner.hyper.alpha)
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.schedule.epochs
    }

    /// One epoch: rollouts in every environment, then gradient steps.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics, EnvError> {
        let epoch = self.epoch;
        let stage = self.schedule.curriculum.stage(epoch);
        let eps = self.schedule.epsilon(epoch);
        let fp = self.current_fingerprint();
        let mut finished = 0u32;
        let mut successes = 0u32;
        let mut return_sum = 0.0;
        let mut return_count = 0u32;

        for k in 0..self.slots.len() {
            for _ in 0..self.schedule.ticks_per_env {
                let slot = &mut self.slots[k];
                for i in 0..2 {
                    if !slot.env.needs_decision(i) {
                        continue;
                    }
                    let s = slot.env.state_vector(i, fp);
                    if let Some(p) = slot.pending[i].take() {
                        self.replay.push(&Transition { state: p.state, action: p.action, reward: p.reward, next_state: s.clone(), terminal: false });
                    }
                    let a = self.learner.select_action(&s[..self.learner.obs_len], ActMode::Train, eps, &mut self.rng);
                    slot.env.decide(i, Behavior::from_index(a).unwrap());
                    slot.pending[i] = Some(Pending { state: s, action: a, reward: 0.0 });
                }
                let res = slot.env.tick()?;
                for i in 0..2 {
                    slot.returns[i] += res.rewards[i];
                    if let Some(p) = slot.pending[i].as_mut() {
                        p.reward += res.rewards[i];
                    }
                    if res.agent_done[i] {
                        if let Some(p) = slot.pending[i].take() {
                            // successor never bootstrapped; store the state as a placeholder
                            let next = p.state.clone();
                            self.replay.push(&Transition { state: p.state, action: p.action, reward: p.reward, next_state: next, terminal: true });
                        }
                    }
                }
                if res.outcome.is_terminal() {
                    finished += 1;
                    if res.outcome == crate::env::OutcomeKind::Success {
                        successes += 1;
                    }
                    return_sum += slot.returns[0] + slot.returns[1];
                    return_count += 2;
                    let seed = self.rng.gen();
                    slot.env = Env::new_training(self.env_config.clone(), stage, seed)?;
                    slot.pending = [None, None];
                    slot.returns = [0.0; 2];
                }
            }
        }

        let mut critic_loss = 0.0;
        let mut actor_loss = 0.0;
        let steps_before = self.learner.critic_steps;
        if self.replay.len() >= self.schedule.warmup.max(1) {
            let beta = self.schedule.is_exponent(epoch);
            let bs = self.learner.hyper.batch_size;
            for _ in 0..self.schedule.critic_steps_per_epoch {
                let batch = self.replay.sample(bs, beta, &mut self.rng);
                let (loss, td) = self.learner.critic_update(&batch);
                self.replay.update_priorities(&batch.indices, &td);
                critic_loss += loss;
                if self.learner.kind == LearnerKind::Dasac {
                    for _ in 0..self.learner.hyper.actor_steps_per_critic_step {
                        let b = self.replay.sample(bs, beta, &mut self.rng);
                        actor_loss += self.learner.actor_update(&b);
                    }
                }
            }
        }
        let steps = (self.learner.critic_steps - steps_before) as f64;
        let actor_steps = steps * self.learner.hyper.actor_steps_per_critic_step as f64;
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch,
            stage,
            critic_steps: self.learner.critic_steps,
            critic_loss: if steps > 0.0 { critic_loss / steps } else { f64::NAN },
            actor_loss: if actor_steps > 0.0 && self.learner.kind == LearnerKind::Dasac { actor_loss / actor_steps } else { f64::NAN },
            mean_return: if return_count > 0 { return_sum / return_count as f64 } else { f64::NAN },
            success_rate: if finished > 0 { successes as f64 / finished as f64 } else { f64::NAN },
            episodes: finished,
            epsilon: eps,
            alpha: self.learner.hyper.alpha,
            replay_len: self.replay.len(),
        })
    }

    /// Frozen copy of the acting side for evaluation.
    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot { learner: self.learner.clone(), fingerprint: self.current_fingerprint(), epoch: self.epoch }
    }
}

/// A learner frozen at some epoch together with the fingerprint it acts with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub learner: Learner,
    pub fingerprint: [f64; FINGERPRINT_LEN],
    pub epoch: u32,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curriculum_schedule() {
        let c = Curriculum { stage_a_epochs: 3, alternate_every: 2 };
        let stages: Vec<Stage> = (0..9).map(|e| c.stage(e)).collect();
        use Stage::*;
        assert_eq!(stages, vec![A, A, A, B, B, C, C, B, B]);
    }

    #[test]
    fn annealing_endpoints() {
        let s = TrainingSchedule::desk();
        assert_eq!(s.is_exponent(0), 0.4);
        assert!((s.is_exponent(s.epochs - 1) - 1.0).abs() < 1e-12);
        assert_eq!(s.epsilon(0), 1.0);
        assert!((s.epsilon(10_000) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn exact_critic_steps_per_epoch() {
        let sched = TrainingSchedule {
            epochs: 3,
            n_envs: 2,
            ticks_per_env: 60,
            critic_steps_per_epoch: 7,
            replay_capacity: 30,
            warmup: 1,
            ..TrainingSchedule::desk()
        };
        let hyper = Hyperparams { hidden: vec![8], batch_size: 4, ..Hyperparams::default() };
        let mut t = Trainer::new(LearnerKind::Dasac, hyper, sched, EnvConfig::default(), 1).unwrap();
        let mut last = 0;
        for _ in 0..3 {
            let m = t.run_epoch().unwrap();
            assert_eq!(m.critic_steps - last, 7);
            last = m.critic_steps;
            assert!(m.replay_len <= 30);
        }
        assert_eq!(t.learner.actor_steps, 42);
    }
}
