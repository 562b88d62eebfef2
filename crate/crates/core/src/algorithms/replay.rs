//! Prioritized experience replay backed by a sum tree.

use rand::Rng;

/// Binary sum tree over `capacity` leaves.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.nodes[self.leaves + idx]
    }

    pub fn set(&mut self, idx: usize, value: f64) {
        let mut k = self.leaves + idx;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative interval contains `mass` (in `[0, total)`).
    pub fn find(&self, mut mass: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if mass < left || self.nodes[2 * k + 1] == 0.0 {
                k *= 2;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}

/// One stored decision-to-decision transition. The observation is the
/// first `obs_len` entries of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// A sampled minibatch, flattened row-major.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub states: Vec<f64>,
    pub next_states: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<bool>,
    pub state_len: usize,
    pub obs_len: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn slice_prefix(rows: &[f64], row_len: usize, prefix: usize) -> Vec<f64> {
        rows.chunks(row_len).flat_map(|r| r[..prefix].iter().copied()).collect()
    }

    pub fn observations(&self) -> Vec<f64> {
        Self::slice_prefix(&self.states, self.state_len, self.obs_len)
    }

    pub fn next_observations(&self) -> Vec<f64> {
        Self::slice_prefix(&self.next_states, self.state_len, self.obs_len)
    }

    /// Builds an unweighted batch directly from transitions.
    pub fn from_transitions(ts: &[Transition], obs_len: usize, weights: Option<&[f64]>) -> Self {
        let state_len = ts.first().map_or(0, |t| t.state.len());
        Batch {
            indices: (0..ts.len()).collect(),
            weights: weights.map_or_else(|| vec![1.0; ts.len()], |w| w.to_vec()),
            states: ts.iter().flat_map(|t| t.state.iter().copied()).collect(),
            next_states: ts.iter().flat_map(|t| t.next_state.iter().copied()).collect(),
            actions: ts.iter().map(|t| t.action).collect(),
            rewards: ts.iter().map(|t| t.reward).collect(),
            terminals: ts.iter().map(|t| t.terminal).collect(),
            state_len,
            obs_len,
        }
    }
}

/// Ring buffer with proportional prioritized sampling. Vectors are kept in
/// single precision to bound memory at large capacities.
#[derive(Debug, Clone)]
pub struct PrioritizedReplay {
    capacity: usize,
    state_len: usize,
    obs_len: usize,
    len: usize,
    next: usize,
    states: Vec<f32>,
    next_states: Vec<f32>,
    actions: Vec<u8>,
    rewards: Vec<f64>,
    terminals: Vec<bool>,
    tree: SumTree,
    /// Priority exponent.
    pub alpha: f64,
    max_priority: f64,
}

pub const PRIORITY_EPS: f64 = 1e-3;

impl PrioritizedReplay {
    pub fn new(capacity: usize, state_len: usize, obs_len: usize, alpha: f64) -> Self {
        Self {
            capacity,
            state_len,
            obs_len,
            len: 0,
            next: 0,
            states: Vec::new(),
            next_states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminals: Vec::new(),
            tree: SumTree::new(capacity),
            alpha,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a transition at maximal current priority, evicting the oldest
    /// entry once full.
    pub fn push(&mut self, t: &Transition) {
        assert_eq!(t.state.len(), self.state_len);
        assert_eq!(t.next_state.len(), self.state_len);
        let i = self.next;
        let sl = self.state_len;
        if i == self.actions.len() {
            self.states.extend(t.state.iter().map(|&v| v as f32));
            self.next_states.extend(t.next_state.iter().map(|&v| v as f32));
            self.actions.push(t.action as u8);
            self.rewards.push(t.reward);
            self.terminals.push(t.terminal);
        } else {
            for k in 0..sl {
                self.states[i * sl + k] = t.state[k] as f32;
                self.next_states[i * sl + k] = t.next_state[k] as f32;
            }
            self.actions[i] = t.action as u8;
            self.rewards[i] = t.reward;
            self.terminals[i] = t.terminal;
        }
        self.tree.set(i, self.max_priority.powf(self.alpha));
        self.next = (self.next + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Sampling probability of slot `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// Sets the priority of slot `i` from its TD error.
    pub fn set_priority(&mut self, i: usize, td_error: f64) {
        let p = td_error.abs() + PRIORITY_EPS;
        self.max_priority = self.max_priority.max(p);
        self.tree.set(i, p.powf(self.alpha));
    }

    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        for (&i, &e) in indices.iter().zip(td_errors) {
            self.set_priority(i, e);
        }
    }

    /// Draws a slot index proportionally to priority.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = self.tree.total();
        let i = self.tree.find(rng.gen::<f64>() * total);
        i.min(self.len - 1)
    }

    /// Independent proportional draws with importance weights
    /// `(N P(i))^-beta`, normalized by the batch maximum.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> Batch {
        assert!(self.len > 0, "sampling from an empty buffer");
        let sl = self.state_len;
        let mut b = Batch { state_len: sl, obs_len: self.obs_len, ..Batch::default() };
        for _ in 0..batch {
            let i = self.sample_index(rng);
            let p = self.probability(i);
            b.indices.push(i);
            b.weights.push((self.len as f64 * p).powf(-beta));
            b.states.extend(self.states[i * sl..(i + 1) * sl].iter().map(|&v| v as f64));
            b.next_states.extend(self.next_states[i * sl..(i + 1) * sl].iter().map(|&v| v as f64));
            b.actions.push(self.actions[i] as usize);
            b.rewards.push(self.rewards[i]);
            b.terminals.push(self.terminals[i]);
        }
        let w_max = b.weights.iter().cloned().fold(0.0, f64::max);
        for w in &mut b.weights {
            *w /= w_max;
        }
        b
    }
}
