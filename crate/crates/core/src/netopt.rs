//! Small fully connected networks with hand-written backpropagation, the
//! two loss heads used by the learners, and an Adam optimizer.
//!
//! Parameters live in one flat vector. Each layer stores a row-major
//! `out x in` weight block followed by its `out` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// Value + advantage head combined as `Q = V + A - mean(A)`.
    pub dueling: bool,
}

impl Architecture {
    /// Widths of every layer including input and the raw head.
    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(if self.dueling { self.output_dim + 1 } else { self.output_dim });
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    pub arch: Architecture,
    pub params: Vec<f64>,
    layout: Vec<LayerSlot>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    arch: Architecture,
    params: Vec<f64>,
}

impl From<NetworkRepr> for Network {
    fn from(r: NetworkRepr) -> Self {
        Network::from_params(r.arch, r.params)
    }
}

impl From<Network> for NetworkRepr {
    fn from(n: Network) -> Self {
        NetworkRepr { arch: n.arch, params: n.params }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct LayerSlot {
    offset: usize,
    n_in: usize,
    n_out: usize,
}

/// Activations saved by a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// Post-activation values per layer, starting with the input.
    acts: Vec<Vec<f64>>,
    /// Final network output (`batch x output_dim`).
    pub output: Vec<f64>,
}

fn layout_of(arch: &Architecture) -> Vec<LayerSlot> {
    let mut offset = 0;
    arch.widths()
        .windows(2)
        .map(|w| {
            let s = LayerSlot { offset, n_in: w[0], n_out: w[1] };
            offset += w[0] * w[1] + w[1];
            s
        })
        .collect()
}

impl Network {
    pub fn zeros(arch: Architecture) -> Self {
        let params = vec![0.0; arch.param_count()];
        Self::from_params(arch, params)
    }

    /// Uniform fan-in initialization, `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let layout = layout_of(&arch);
        let mut params = vec![0.0; arch.param_count()];
        for s in &layout {
            let bound = 1.0 / (s.n_in as f64).sqrt();
            for p in &mut params[s.offset..s.offset + s.n_in * s.n_out + s.n_out] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Self { arch, params, layout }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Self {
        assert_eq!(params.len(), arch.param_count(), "parameter count mismatch");
        let layout = layout_of(&arch);
        Self { arch, params, layout }
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_batch(x, 1).output
    }

    pub fn forward_batch(&self, xs: &[f64], batch: usize) -> ForwardCache {
        assert_eq!(xs.len(), batch * self.arch.input_dim, "input shape mismatch");
        let n_layers = self.layout.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(xs.to_vec());
        for (l, s) in self.layout.iter().enumerate() {
            let w = &self.params[s.offset..s.offset + s.n_in * s.n_out];
            let b = &self.params[s.offset + s.n_in * s.n_out..s.offset + s.n_in * s.n_out + s.n_out];
            let input = &acts[l];
            let mut out = vec![0.0; batch * s.n_out];
            let relu = l + 1 < n_layers;
            for i in 0..batch {
                let x = &input[i * s.n_in..(i + 1) * s.n_in];
                let y = &mut out[i * s.n_out..(i + 1) * s.n_out];
                for o in 0..s.n_out {
                    let row = &w[o * s.n_in..(o + 1) * s.n_in];
                    let mut acc = b[o];
                    for (a, c) in row.iter().zip(x) {
                        acc += a * c;
                    }
                    y[o] = if relu { acc.max(0.0) } else { acc };
                }
            }
            acts.push(out);
        }
        let raw = acts.last().unwrap();
        let output = if self.arch.dueling {
            let n = self.arch.output_dim;
            let mut q = vec![0.0; batch * n];
            for i in 0..batch {
                let h = &raw[i * (n + 1)..(i + 1) * (n + 1)];
                let mean_a = h[1..].iter().sum::<f64>() / n as f64;
                for j in 0..n {
                    q[i * n + j] = h[0] + h[1 + j] - mean_a;
                }
            }
            q
        } else {
            raw.clone()
        };
        ForwardCache { batch, acts, output }
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], grads: &mut [f64]) {
        let batch = cache.batch;
        assert_eq!(d_output.len(), batch * self.arch.output_dim, "output gradient shape mismatch");
        assert_eq!(grads.len(), self.params.len(), "gradient buffer mismatch");
        let mut delta = if self.arch.dueling {
            let n = self.arch.output_dim;
            let mut d = vec![0.0; batch * (n + 1)];
            for i in 0..batch {
                let g = &d_output[i * n..(i + 1) * n];
                let sum: f64 = g.iter().sum();
                d[i * (n + 1)] = sum;
                for j in 0..n {
                    d[i * (n + 1) + 1 + j] = g[j] - sum / n as f64;
                }
            }
            d
        } else {
            d_output.to_vec()
        };
        for l in (0..self.layout.len()).rev() {
            let s = self.layout[l];
            let input = &cache.acts[l];
            let w_end = s.offset + s.n_in * s.n_out;
            {
                let (gw, gb) = grads[s.offset..w_end + s.n_out].split_at_mut(s.n_in * s.n_out);
                for i in 0..batch {
                    let x = &input[i * s.n_in..(i + 1) * s.n_in];
                    for o in 0..s.n_out {
                        let d = delta[i * s.n_out + o];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        for (g, xv) in gw[o * s.n_in..(o + 1) * s.n_in].iter_mut().zip(x) {
                            *g += d * xv;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[s.offset..w_end];
            let mut prev = vec![0.0; batch * s.n_in];
            for i in 0..batch {
                let p = &mut prev[i * s.n_in..(i + 1) * s.n_in];
                for o in 0..s.n_out {
                    let d = delta[i * s.n_out + o];
                    if d == 0.0 {
                        continue;
                    }
                    for (pv, wv) in p.iter_mut().zip(&w[o * s.n_in..(o + 1) * s.n_in]) {
                        *pv += d * wv;
                    }
                }
                // ReLU derivative, read off the saved post-activation
                for (pv, a) in p.iter_mut().zip(&input[i * s.n_in..(i + 1) * s.n_in]) {
                    if *a <= 0.0 {
                        *pv = 0.0;
                    }
                }
            }
            delta = prev;
        }
    }

    /// Hard target update.
    pub fn copy_from(&mut self, src: &Network) {
        assert_eq!(self.arch, src.arch);
        self.params.copy_from_slice(&src.params);
    }
}

/// Weighted squared error on the chosen action's value. Returns the loss,
/// `d loss / d q` and the TD errors `y - Q(s, a)`.
pub fn q_regression(q: &[f64], n_actions: usize, actions: &[usize], targets: &[f64], weights: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let batch = actions.len();
    let mut grad = vec![0.0; q.len()];
    let mut td = Vec::with_capacity(batch);
    let mut loss = 0.0;
    for i in 0..batch {
        let e = targets[i] - q[i * n_actions + actions[i]];
        loss += weights[i] * e * e;
        grad[i * n_actions + actions[i]] = -2.0 * weights[i] * e / batch as f64;
        td.push(e);
    }
    (loss / batch as f64, grad, td)
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    log_softmax(z).into_iter().map(f64::exp).collect()
}

/// Mean over the batch of `KL(softmax(logits) || target)`, with the target
/// given as log-probabilities. Returns the loss and `d loss / d logits`.
pub fn softmax_kl(logits: &[f64], log_target: &[f64], n: usize) -> (f64, Vec<f64>) {
    let batch = logits.len() / n;
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for i in 0..batch {
        let lp = log_softmax(&logits[i * n..(i + 1) * n]);
        let g: Vec<f64> = (0..n).map(|j| lp[j] - log_target[i * n + j]).collect();
        let kl: f64 = (0..n).map(|j| lp[j].exp() * g[j]).sum();
        loss += kl;
        for j in 0..n {
            grad[i * n + j] = lp[j].exp() * (g[j] - kl) / batch as f64;
        }
    }
    (loss / batch as f64, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch(dueling: bool) -> Architecture {
        Architecture { input_dim: 5, hidden: vec![7, 6], output_dim: 3, dueling }
    }

    /// Straight-line reference: explicit matrices, no shared code paths.
    fn oracle_forward(net: &Network, x: &[f64]) -> Vec<f64> {
        let widths = net.arch.widths();
        let mut off = 0;
        let mut h = x.to_vec();
        for l in 0..widths.len() - 1 {
            let (ni, no) = (widths[l], widths[l + 1]);
            let w: Vec<Vec<f64>> = (0..no).map(|o| net.params[off + o * ni..off + (o + 1) * ni].to_vec()).collect();
            let b = &net.params[off + ni * no..off + ni * no + no];
            let mut y: Vec<f64> = (0..no).map(|o| b[o] + (0..ni).map(|i| w[o][i] * h[i]).sum::<f64>()).collect();
            if l + 2 < widths.len() {
                y = y.into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect();
            }
            off += ni * no + no;
            h = y;
        }
        if net.arch.dueling {
            let a = &h[1..];
            let mean = a.iter().sum::<f64>() / a.len() as f64;
            a.iter().map(|v| h[0] + v - mean).collect()
        } else {
            h
        }
    }

    #[test]
    fn zero_dueling_net_outputs_zero() {
        let net = Network::zeros(arch(true));
        assert_eq!(net.forward(&[1.0, 2.0, 3.0, 4.0, 5.0]), vec![0.0; 3]);
    }

    #[test]
    fn forward_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dueling in [false, true] {
            for _ in 0..50 {
                let net = Network::new(arch(dueling), &mut rng);
                let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let a = net.forward(&x);
                let b = oracle_forward(&net, &x);
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn advantage_shift_leaves_q_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Network::new(arch(true), &mut rng);
        let x = [0.3, -0.1, 0.9, 0.0, 1.2];
        let q0 = net.forward(&x);
        // the last layer's advantage biases are rows 1..=3 of the head
        let n = net.params.len();
        for k in n - 3..n {
            net.params[k] += 5.0;
        }
        let q1 = net.forward(&x);
        for (a, b) in q0.iter().zip(&q1) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let a = Architecture { input_dim: 3, hidden: vec![], output_dim: 2, dueling: false };
        let net = Network::zeros(a);
        let x = [1.0, -2.0, 0.5];
        let cache = net.forward_batch(&x, 1);
        let mut g = vec![0.0; net.params.len()];
        net.backward(&cache, &[1.0, 0.0], &mut g);
        assert_eq!(&g[0..3], &x);
        assert_eq!(&g[3..6], &[0.0; 3]);
        assert_eq!(&g[6..8], &[1.0, 0.0]);
    }

    #[test]
    fn kl_zero_at_target() {
        let z = [0.2, -1.0, 0.7, 1.0, 1.0, 1.0];
        let lt: Vec<f64> = z.chunks(3).flat_map(log_softmax).collect();
        let (loss, g) = softmax_kl(&z, &lt, 3);
        assert!(loss.abs() < 1e-15);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut adam = Adam::new(3);
        adam.update(&mut p, &[0.0; 3], 1e-3);
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn sync_copies_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Network::new(arch(true), &mut rng);
        let mut b = Network::new(arch(true), &mut rng);
        b.copy_from(&a);
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert_eq!(a.forward(&x), b.forward(&x));
        }
    }

    #[test]
    fn adam_minimizes_quadratic_bowl() {
        let centre = [0.5, -0.7, 1.0, 0.25];
        let scale = [1.0, 4.0, 0.5, 2.0];
        let mut p = vec![0.0; 4];
        let mut adam = Adam::new(4);
        for _ in 0..5000 {
            let g: Vec<f64> = (0..4).map(|k| 2.0 * scale[k] * (p[k] - centre[k])).collect();
            adam.update(&mut p, &g, 1e-3);
        }
        let f: f64 = (0..4).map(|k| scale[k] * (p[k] - centre[k]).powi(2)).sum();
        assert!(f < 1e-6, "{f}");
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::new(arch(true), &mut rng);
        let json = serde_json::to_string(&net).unwrap();
        let back: Network = serde_json::from_str(&json).unwrap();
        assert_eq!(back.params, net.params);
        assert_eq!(back.forward(&[0.1; 5]), net.forward(&[0.1; 5]));
    }
}
