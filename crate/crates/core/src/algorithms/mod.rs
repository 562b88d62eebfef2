//! Learners over a shared prioritized replay buffer: fingerprinted DQN,
//! soft Q-learning and the discrete asymmetric soft actor-critic, whose
//! critic reads the privileged state while its actor reads only the
//! observation.

pub mod learner;
pub mod replay;
pub mod targets;
pub mod training;

pub use learner::{ActMode, Hyperparams, Learner, LearnerKind, N_ACTIONS};
pub use replay::{Batch, PrioritizedReplay, Transition};
pub use training::{Curriculum, EpochMetrics, PolicySnapshot, Trainer, TrainingSchedule};
