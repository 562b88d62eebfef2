//! Bidirectional lane negotiation: a seeded two-agent driving simulator,
//! discrete multi-agent learners (fingerprinted DQN, soft Q-learning and an
//! asymmetric discrete soft actor-critic), rule-based baselines and an
//! evaluation harness over cooperativeness pairings.

pub mod algorithms;
pub mod baselines;
pub mod dynamics;
pub mod env;
pub mod geometry;
pub mod harness;
pub mod netopt;
pub mod policy;
pub mod scenario;
pub mod sensors;
