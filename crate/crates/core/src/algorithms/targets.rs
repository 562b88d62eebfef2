//! Bootstrap targets and the Boltzmann policy. All functions take
//! row-major `batch x n_actions` value tables.

pub fn boltzmann(q: &[f64], alpha: f64) -> Vec<f64> {
    let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = q.iter().map(|v| ((v - m) / alpha).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `alpha * log sum exp(q / alpha)`, the soft state value.
pub fn soft_value(q: &[f64], alpha: f64) -> f64 {
    let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + alpha * q.iter().map(|v| ((v - m) / alpha).exp()).sum::<f64>().ln()
}

fn bootstrap(rewards: &[f64], terminals: &[bool], gamma: f64, next_value: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|i| if terminals[i] { rewards[i] } else { rewards[i] + gamma * next_value(i) })
        .collect()
}

pub fn dqn_targets(rewards: &[f64], terminals: &[bool], next_q: &[f64], n: usize, gamma: f64) -> Vec<f64> {
    bootstrap(rewards, terminals, gamma, |i| next_q[i * n..(i + 1) * n].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

pub fn sql_targets(rewards: &[f64], terminals: &[bool], next_q: &[f64], n: usize, gamma: f64, alpha: f64) -> Vec<f64> {
    bootstrap(rewards, terminals, gamma, |i| soft_value(&next_q[i * n..(i + 1) * n], alpha))
}

/// Expected soft value of the next state under the actor's distribution.
pub fn dasac_targets(
    rewards: &[f64],
    terminals: &[bool],
    next_q: &[f64],
    next_pi: &[f64],
    n: usize,
    gamma: f64,
    alpha: f64,
) -> Vec<f64> {
    bootstrap(rewards, terminals, gamma, |i| {
        (0..n)
            .map(|j| {
                let p = next_pi[i * n + j];
                if p > 0.0 {
                    p * (next_q[i * n + j] - alpha * p.ln())
                } else {
                    0.0
                }
            })
            .sum()
    })
}
