use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::Batch;
use super::targets::{boltzmann, dasac_targets, dqn_targets, sql_targets};
use crate::netopt::{log_softmax, q_regression, softmax, softmax_kl, Adam, Architecture, Network};

pub const N_ACTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Dqn,
    Sql,
    Dasac,
}

impl std::str::FromStr for LearnerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dqn" => Ok(LearnerKind::Dqn),
            "sql" => Ok(LearnerKind::Sql),
            "dasac" => Ok(LearnerKind::Dasac),
            other => Err(format!("unknown learner kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub gamma: f64,
    /// Entropy temperature for SQL and DASAC.
    pub alpha: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Hard target sync period in critic gradient steps.
    pub target_sync: u64,
    pub hidden: Vec<usize>,
    pub dueling: bool,
    pub actor_steps_per_critic_step: usize,
    /// Exploration rate used by DQN at evaluation.
    pub eval_epsilon: f64,
    /// SQL evaluation samples from the Boltzmann policy (otherwise greedy).
    pub sql_eval_sample: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 0.1,
            lr: 3e-4,
            batch_size: 64,
            target_sync: 1000,
            hidden: vec![256, 256],
            dueling: true,
            actor_steps_per_critic_step: 2,
            eval_epsilon: 0.01,
            sql_eval_sample: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Train,
    Eval,
}

/// A learner's networks and optimizer state. One learner controls both
/// agents in self-play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub kind: LearnerKind,
    pub hyper: Hyperparams,
    pub obs_len: usize,
    pub state_len: usize,
    pub critic: Network,
    pub critic_target: Network,
    critic_opt: Adam,
    pub actor: Option<Network>,
    actor_opt: Option<Adam>,
    pub critic_steps: u64,
    pub actor_steps: u64,
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(kind: LearnerKind, hyper: Hyperparams, obs_len: usize, state_len: usize, rng: &mut R) -> Self {
        // only the DASAC critic sees the privileged state
        let critic_in = if kind == LearnerKind::Dasac { state_len } else { obs_len };
        let critic_arch = Architecture { input_dim: critic_in, hidden: hyper.hidden.clone(), output_dim: N_ACTIONS, dueling: hyper.dueling };
        let critic = Network::new(critic_arch, rng);
        let critic_target = critic.clone();
        let critic_opt = Adam::new(critic.params.len());
        let (actor, actor_opt) = if kind == LearnerKind::Dasac {
            let arch = Architecture { input_dim: obs_len, hidden: hyper.hidden.clone(), output_dim: N_ACTIONS, dueling: false };
            let a = Network::new(arch, rng);
            let opt = Adam::new(a.params.len());
            (Some(a), Some(opt))
        } else {
            (None, None)
        };
        Self { kind, hyper, obs_len, state_len, critic, critic_target, critic_opt, actor, actor_opt, critic_steps: 0, actor_steps: 0 }
    }

    pub fn critic_input_dim(&self) -> usize {
        self.critic.input_dim()
    }

    pub fn actor_input_dim(&self) -> Option<usize> {
        self.actor.as_ref().map(|a| a.input_dim())
    }

    /// Slice of a state row fed to the critic.
    fn critic_rows(&self, states: &[f64], batch: &Batch) -> Vec<f64> {
        if self.critic_input_dim() == batch.state_len {
            states.to_vec()
        } else {
            states.chunks(batch.state_len).flat_map(|r| r[..self.obs_len].iter().copied()).collect()
        }
    }

    /// Action distribution from the acting network. `input` is the agent's
    /// observation vector; no learner acts on the privileged state.
    pub fn action_distribution(&self, obs: &[f64], mode: ActMode, epsilon: f64) -> Vec<f64> {
        assert_eq!(obs.len(), self.obs_len, "acting input must be the observation");
        match self.kind {
            LearnerKind::Dasac => {
                let pi = softmax(&self.actor.as_ref().unwrap().forward(obs));
                // uniform mixing while training; targets still use the actor
                let eps = if mode == ActMode::Train { epsilon } else { 0.0 };
                pi.iter().map(|p| (1.0 - eps) * p + eps / N_ACTIONS as f64).collect()
            }
            LearnerKind::Dqn => {
                let q = self.critic.forward(obs);
                let eps = if mode == ActMode::Eval { self.hyper.eval_epsilon } else { epsilon };
                let best = argmax(&q);
                (0..N_ACTIONS).map(|a| eps / N_ACTIONS as f64 + if a == best { 1.0 - eps } else { 0.0 }).collect()
            }
            LearnerKind::Sql => {
                let q = self.critic.forward(obs);
                if mode == ActMode::Eval && !self.hyper.sql_eval_sample {
                    let best = argmax(&q);
                    (0..N_ACTIONS).map(|a| if a == best { 1.0 } else { 0.0 }).collect()
                } else {
                    boltzmann(&q, self.hyper.alpha)
                }
            }
        }
    }

    pub fn select_action<R: Rng + ?Sized>(&self, obs: &[f64], mode: ActMode, epsilon: f64, rng: &mut R) -> usize {
        sample_categorical(&self.action_distribution(obs, mode, epsilon), rng)
    }

    /// Bootstrap targets for a batch using the target critic (and for DASAC
    /// the current actor on the next observations).
    pub fn targets(&self, batch: &Batch) -> Vec<f64> {
        let n = batch.len();
        let h = &self.hyper;
        let next_in = self.critic_rows(&batch.next_states, batch);
        let next_q = self.critic_target.forward_batch(&next_in, n).output;
        match self.kind {
            LearnerKind::Dqn => dqn_targets(&batch.rewards, &batch.terminals, &next_q, N_ACTIONS, h.gamma),
            LearnerKind::Sql => sql_targets(&batch.rewards, &batch.terminals, &next_q, N_ACTIONS, h.gamma, h.alpha),
            LearnerKind::Dasac => {
                let actor = self.actor.as_ref().unwrap();
                let logits = actor.forward_batch(&batch.next_observations(), n).output;
                let pi: Vec<f64> = logits.chunks(N_ACTIONS).flat_map(softmax).collect();
                dasac_targets(&batch.rewards, &batch.terminals, &next_q, &pi, N_ACTIONS, h.gamma, h.alpha)
            }
        }
    }

    /// Critic loss and parameter gradient without applying an update.
    pub fn critic_loss_grad(&self, batch: &Batch) -> (f64, Vec<f64>, Vec<f64>) {
        let n = batch.len();
        let y = self.targets(batch);
        let input = self.critic_rows(&batch.states, batch);
        let cache = self.critic.forward_batch(&input, n);
        let (loss, dq, td) = q_regression(&cache.output, N_ACTIONS, &batch.actions, &y, &batch.weights);
        let mut grads = vec![0.0; self.critic.params.len()];
        self.critic.backward(&cache, &dq, &mut grads);
        (loss, grads, td)
    }

    /// One critic gradient step. Returns the loss and per-sample TD errors.
    pub fn critic_update(&mut self, batch: &Batch) -> (f64, Vec<f64>) {
        let (loss, grads, td) = self.critic_loss_grad(batch);
        self.critic_opt.update(&mut self.critic.params, &grads, self.hyper.lr);
        self.critic_steps += 1;
        if self.critic_steps % self.hyper.target_sync == 0 {
            self.sync_target();
        }
        (loss, td)
    }

    pub fn sync_target(&mut self) {
        self.critic_target.copy_from(&self.critic);
    }

    /// Actor KL loss and gradient; the critic is read only.
    pub fn actor_loss_grad(&self, batch: &Batch) -> (f64, Vec<f64>) {
        let actor = self.actor.as_ref().expect("learner has no actor");
        let n = batch.len();
        let q = self.critic.forward_batch(&self.critic_rows(&batch.states, batch), n).output;
        let alpha = self.hyper.alpha;
        let log_target: Vec<f64> = q.chunks(N_ACTIONS).flat_map(|r| log_softmax(&r.iter().map(|v| v / alpha).collect::<Vec<_>>())).collect();
        let cache = actor.forward_batch(&batch.observations(), n);
        let (loss, dz) = softmax_kl(&cache.output, &log_target, N_ACTIONS);
        let mut grads = vec![0.0; actor.params.len()];
        actor.backward(&cache, &dz, &mut grads);
        (loss, grads)
    }

    pub fn actor_update(&mut self, batch: &Batch) -> f64 {
        let (loss, grads) = self.actor_loss_grad(batch);
        let lr = self.hyper.lr;
        self.actor_opt.as_mut().unwrap().update(&mut self.actor.as_mut().unwrap().params, &grads, lr);
        self.actor_steps += 1;
        loss
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the last cumulative value
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> Hyperparams {
        Hyperparams { hidden: vec![8], ..Hyperparams::default() }
    }

    #[test]
    fn dasac_input_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = Learner::new(LearnerKind::Dasac, small(), 79, 82, &mut rng);
        assert_eq!(l.actor_input_dim(), Some(79));
        assert_eq!(l.critic_input_dim(), 82);
        let d = Learner::new(LearnerKind::Dqn, small(), 79, 82, &mut rng);
        assert_eq!(d.critic_input_dim(), 79);
        assert!(d.actor.is_none());
    }

    #[test]
    fn dqn_eval_is_nearly_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Architecture { input_dim: 1, hidden: vec![], output_dim: 3, dueling: false };
        let mut l = Learner::new(LearnerKind::Dqn, small(), 1, 1, &mut rng);
        l.critic = Network::from_params(a, vec![0.0, 0.0, 0.0, 5.0, 1.0, 1.0]);
        let p = l.action_distribution(&[0.0], ActMode::Eval, 1.0);
        assert!(p[0] >= 0.99);
    }

    #[test]
    fn dasac_deterministic_actor() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut l = Learner::new(LearnerKind::Dasac, small(), 1, 1, &mut rng);
        let a = Architecture { input_dim: 1, hidden: vec![], output_dim: 3, dueling: false };
        l.actor = Some(Network::from_params(a, vec![0.0, 0.0, 0.0, 1000.0, 0.0, 0.0]));
        for _ in 0..1000 {
            assert_eq!(l.select_action(&[0.3], ActMode::Train, 0.0, &mut rng), 0);
        }
    }

    #[test]
    fn sql_uniform_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut l = Learner::new(LearnerKind::Sql, small(), 1, 1, &mut rng);
        l.critic = Network::from_params(Architecture { input_dim: 1, hidden: vec![], output_dim: 3, dueling: false }, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[l.select_action(&[0.0], ActMode::Train, 0.0, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 1.0 / 3.0).abs() < 0.02);
        }
    }
}
