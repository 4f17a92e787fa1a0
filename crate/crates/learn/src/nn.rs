//! Dense ReLU networks with hand-written backprop, Adam and softmax helpers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("non-finite gradient in batch {batch}")]
    NonFiniteGradient { batch: u64 },
}

/// Fully connected network, ReLU on hidden layers, linear output.
///
/// Parameters are stored flat: for each layer the `out x in` weight matrix
/// (row-major) followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer inputs saved by [`Mlp::forward_train`].
#[derive(Debug, Clone)]
pub struct Tape {
    rows: usize,
    acts: Vec<Vec<f64>>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// He-uniform weights, zero biases. The output layer is scaled down so a
    /// fresh network starts close to uniform/zero outputs.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        let mut params = Vec::with_capacity(param_count(sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut bound = (6.0 / fan_in as f64).sqrt();
            if l + 1 == layers {
                bound *= 0.1;
            }
            for _ in 0..fan_in * fan_out {
                params.push(rng.gen_range(-bound..bound));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && sizes.iter().all(|&s| s > 0) && params.len() == param_count(&sizes))
            .then_some(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layer(&self, l: usize, input: &[f64], rows: usize, out: &mut Vec<f64>, offset: &mut usize) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[*offset..*offset + n_in * n_out];
        let b = &self.params[*offset + n_in * n_out..*offset + n_in * n_out + n_out];
        *offset += n_in * n_out + n_out;
        out.clear();
        out.reserve(rows * n_out);
        let relu = l + 2 < self.sizes.len();
        for r in 0..rows {
            let x = &input[r * n_in..(r + 1) * n_in];
            for o in 0..n_out {
                let wr = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + wr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                out.push(if relu { z.max(0.0) } else { z });
            }
        }
    }

    /// Outputs for `rows` inputs laid out row-major in `x`.
    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        assert_eq!(x.len(), rows * self.input_dim());
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let mut offset = 0;
        for l in 0..self.sizes.len() - 1 {
            self.layer(l, &cur, rows, &mut next, &mut offset);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Like [`Self::forward`], keeping what [`Self::backward`] needs.
    pub fn forward_train(&self, x: &[f64], rows: usize) -> (Vec<f64>, Tape) {
        assert_eq!(x.len(), rows * self.input_dim());
        let mut acts = vec![x.to_vec()];
        let mut offset = 0;
        for l in 0..self.sizes.len() - 1 {
            let mut out = Vec::new();
            self.layer(l, &acts[l], rows, &mut out, &mut offset);
            acts.push(out);
        }
        let out = acts.pop().unwrap();
        (out, Tape { rows, acts })
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, tape: &Tape, dout: &[f64], grad: &mut [f64]) {
        let rows = tape.rows;
        let layers = self.sizes.len() - 1;
        assert_eq!(dout.len(), rows * self.output_dim());
        assert_eq!(grad.len(), self.params.len());
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = dout.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &tape.acts[l];
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for r in 0..rows {
                    let x = &input[r * n_in..(r + 1) * n_in];
                    for o in 0..n_out {
                        let d = delta[r * n_out + o];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                            *g += d * xi;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; rows * n_in];
            for r in 0..rows {
                for o in 0..n_out {
                    let d = delta[r * n_out + o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, wi) in prev[r * n_in..(r + 1) * n_in].iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
            }
            // ReLU mask: the stored input is the activated output of layer l - 1
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// `self <- (1 - tau) * self + tau * other`.
    pub fn polyak_from(&mut self, other: &Mlp, tau: f64) {
        assert_eq!(self.sizes, other.sizes);
        for (t, s) in self.params.iter_mut().zip(&other.params) {
            *t = (1.0 - tau) * *t + tau * s;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Scales `grad` so its Euclidean norm is at most `max_norm`. Returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Checks, clips and applies one optimizer step.
pub fn apply_gradient(
    net: &mut Mlp,
    opt: &mut Adam,
    grad: &mut [f64],
    max_norm: f64,
    batch: u64,
) -> Result<(), NnError> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(NnError::NonFiniteGradient { batch });
    }
    clip_grad_norm(grad, max_norm);
    opt.step(net.params_mut(), grad);
    Ok(())
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Softmax over the candidate logits; positions outside the candidate set
/// never enter the computation.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Softmax restricted to `mask`; masked-out entries get exactly 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    assert_eq!(logits.len(), mask.len());
    let kept: Vec<f64> = logits.iter().zip(mask).filter(|(_, &k)| k).map(|(z, _)| *z).collect();
    let p = softmax(&kept);
    let mut it = p.into_iter();
    mask.iter().map(|&k| if k { it.next().unwrap() } else { 0.0 }).collect()
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn linear_layer_gradient_by_hand() {
        // y = w.x + b, loss = y^2 / 2  =>  dw = y x, db = y
        let net = Mlp::from_parts(vec![2, 1], vec![0.5, -1.0, 0.25]).unwrap();
        let x = [2.0, 3.0];
        let (y, tape) = net.forward_train(&x, 1);
        let y = y[0];
        assert_eq!(y, 0.5 * 2.0 - 3.0 + 0.25);
        let mut g = vec![0.0; 3];
        net.backward(&tape, &[y], &mut g);
        assert_eq!(g, vec![y * 2.0, y * 3.0, y]);
    }

    #[test]
    fn adam_finds_quadratic_minimum() {
        // f(x) = (x - 3)^2
        let mut x = [0.0];
        let mut opt = Adam::new(1, 0.05);
        for _ in 0..5000 {
            let g = [2.0 * (x[0] - 3.0)];
            opt.step(&mut x, &g);
        }
        assert!((x[0] - 3.0).abs() < 1e-6, "{}", x[0]);
    }

    #[test]
    fn softmax_properties() {
        let z = [0.3, -1.2, 2.0, 0.0];
        let p = softmax(&z);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(softmax(&[4.2]), vec![1.0]);
        let zero = Mlp::zeros(&[3, 4, 1]);
        let logits = zero.forward(&[1.0; 9], 3);
        assert_eq!(softmax(&logits), vec![1.0 / 3.0; 3]);
        let m = masked_softmax(&z, &[true, false, true, false]);
        assert_eq!(m[1], 0.0);
        assert_eq!(m[3], 0.0);
        assert!((m[0] + m[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clip_and_nonfinite() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15);
        let mut net = Mlp::zeros(&[1, 1]);
        let mut opt = Adam::new(2, 0.1);
        let mut bad = vec![f64::NAN, 0.0];
        assert_eq!(
            apply_gradient(&mut net, &mut opt, &mut bad, 10.0, 7),
            Err(NnError::NonFiniteGradient { batch: 7 })
        );
        assert_eq!(net.params(), &[0.0, 0.0]);
    }

    #[test]
    fn polyak_mixes() {
        let mut t = Mlp::zeros(&[1, 1]);
        let s = Mlp::from_parts(vec![1, 1], vec![1.0, 2.0]).unwrap();
        t.polyak_from(&s, 0.25);
        assert_eq!(t.params(), &[0.25, 0.5]);
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::new(&[18, 64, 64, 1], &mut ChaCha8Rng::seed_from_u64(1));
        let b = Mlp::new(&[18, 64, 64, 1], &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert_eq!(a.num_params(), 18 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
    }
}
