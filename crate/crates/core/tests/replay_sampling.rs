use bilane::algorithms::{PrioritizedReplay, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn transition(k: usize) -> Transition {
    Transition { state: vec![k as f64, 1.0], action: k % 3, reward: k as f64, next_state: vec![1.0, k as f64], terminal: false }
}

#[test]
fn sampling_frequency_follows_priority_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alpha = 0.6;
    let n = 20;
    let mut buf = PrioritizedReplay::new(n, 2, 1, alpha);
    let mut td = Vec::new();
    for k in 0..n {
        buf.push(&transition(k));
        let e: f64 = rng.gen_range(0.5..2.0);
        buf.set_priority(k, e);
        td.push(e);
    }
    let mass: Vec<f64> = td.iter().map(|e| (e + 1e-3).powf(alpha)).collect();
    let total: f64 = mass.iter().sum();

    let draws = 1_000_000;
    let mut counts = vec![0usize; n];
    for _ in 0..draws {
        counts[buf.sample_index(&mut rng)] += 1;
    }
    for k in 0..n {
        let want = mass[k] / total;
        let got = counts[k] as f64 / draws as f64;
        assert!((got / want - 1.0).abs() < 0.03, "slot {k}: {got} vs {want}");
    }
}

#[test]
fn importance_weights_match_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut buf = PrioritizedReplay::new(8, 2, 1, 0.6);
    for k in 0..8 {
        buf.push(&transition(k));
        buf.set_priority(k, 0.1 * (k + 1) as f64);
    }
    let beta = 0.7;
    let b = buf.sample(32, beta, &mut rng);
    let raw: Vec<f64> = b.indices.iter().map(|&i| (8.0 * buf.probability(i)).powf(-beta)).collect();
    let max = raw.iter().cloned().fold(0.0, f64::max);
    for (w, r) in b.weights.iter().zip(&raw) {
        assert!((w - r / max).abs() < 1e-12);
    }
    // rows line up with the stored transitions
    for (j, &i) in b.indices.iter().enumerate() {
        assert_eq!(b.states[2 * j], i as f64);
        assert_eq!(b.actions[j], i % 3);
        assert_eq!(b.rewards[j], i as f64);
    }
}

#[test]
fn new_transitions_enter_at_max_priority() {
    let mut buf = PrioritizedReplay::new(4, 2, 1, 1.0);
    buf.push(&transition(0));
    buf.set_priority(0, 5.0);
    buf.push(&transition(1));
    assert!((buf.probability(0) - buf.probability(1)).abs() < 1e-12);
}
