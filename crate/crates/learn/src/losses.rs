//! Training losses. Each returns the batch-mean loss and, when `grad` is
//! given, adds its exact gradient with respect to the network parameters.

use rayon::prelude::*;
use treebranch_core::features::FeatureMatrix;

use crate::nn::{argmax, log_softmax, softmax, Mlp};

/// Samples per parallel work unit. Fixed so results do not depend on the thread count.
pub const CHUNK: usize = 16;

/// Evaluates a mean loss on fixed chunks of `batch` in parallel and combines
/// the chunk results in order. `f` returns the chunk's mean loss (and any
/// extra statistic) and adds the chunk's mean gradient. Returns the per-chunk
/// results with their sizes and the gradient of the full-batch mean.
pub fn par_grad<S, R, F>(num_params: usize, batch: &[S], f: F) -> (Vec<(usize, R)>, Vec<f64>)
where
    S: Sync,
    R: Send,
    F: Fn(&[S], &mut [f64]) -> R + Sync,
{
    let parts: Vec<(usize, R, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|c| {
            let mut g = vec![0.0; num_params];
            let r = f(c, &mut g);
            (c.len(), r, g)
        })
        .collect();
    let total = batch.len().max(1) as f64;
    let mut grad = vec![0.0; num_params];
    let mut out = Vec::with_capacity(parts.len());
    for (n, r, g) in parts {
        let w = n as f64 / total;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += w * b;
        }
        out.push((n, r));
    }
    (out, grad)
}

/// Size-weighted mean of per-chunk means.
pub fn weighted_mean(parts: &[(usize, f64)]) -> f64 {
    let n: usize = parts.iter().map(|p| p.0).sum();
    parts.iter().map(|(k, v)| *k as f64 * v).sum::<f64>() / n.max(1) as f64
}

/// Runs `net` on one state, lets `f` turn the outputs into `(loss, d loss / d outputs)`
/// and backpropagates `scale * d loss / d outputs`.
fn per_state(
    net: &Mlp,
    fm: &FeatureMatrix,
    scale: f64,
    grad: Option<&mut [f64]>,
    f: impl FnOnce(&[f64]) -> (f64, Vec<f64>),
) -> f64 {
    match grad {
        None => f(&net.forward(fm.as_slice(), fm.rows())).0,
        Some(g) => {
            let (out, tape) = net.forward_train(fm.as_slice(), fm.rows());
            let (loss, mut dout) = f(&out);
            if dout.iter().any(|d| *d != 0.0) {
                dout.iter_mut().for_each(|d| *d *= scale);
                net.backward(&tape, &dout, g);
            }
            loss
        }
    }
}

fn mean_scale(n: usize) -> f64 {
    1.0 / n.max(1) as f64
}

/// `d log pi(a) / d logits = onehot(a) - pi`.
fn dlogp(p: &[f64], a: usize, coef: f64) -> Vec<f64> {
    p.iter()
        .enumerate()
        .map(|(i, pi)| coef * ((i == a) as u8 as f64 - pi))
        .collect()
}

/// Behavior cloning: mean `-log pi(a_i | s_i)`.
pub fn bc_loss(actor: &Mlp, batch: &[(&FeatureMatrix, usize)], mut grad: Option<&mut [f64]>) -> f64 {
    let s = mean_scale(batch.len());
    let mut total = 0.0;
    for &(fm, a) in batch {
        total += per_state(actor, fm, s, grad.as_deref_mut(), |z| {
            let lp = log_softmax(z);
            (-lp[a], dlogp(&softmax(z), a, -1.0))
        });
    }
    total * s
}

pub struct ActorSample<'a> {
    pub features: &'a FeatureMatrix,
    pub action: usize,
    /// Critic values of every candidate, held fixed.
    pub q: &'a [f64],
}

/// `alpha / mean |Q(s_i, a_i)|`, denominator floored at 1e-6.
pub fn offline_lambda(alpha: f64, q_taken: &[f64]) -> f64 {
    let mean = q_taken.iter().map(|q| q.abs()).sum::<f64>() / q_taken.len().max(1) as f64;
    alpha / mean.max(1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorLoss {
    pub total: f64,
    /// The behavior-cloning part, mean `-log pi(a_i)`.
    pub bc: f64,
}

/// Offline actor objective, minimized: mean of `-(lambda * sum_a pi(a) Q(a) + log pi(a_i))`.
pub fn actor_loss(
    actor: &Mlp,
    batch: &[ActorSample<'_>],
    lambda: f64,
    mut grad: Option<&mut [f64]>,
) -> ActorLoss {
    let s = mean_scale(batch.len());
    let mut total = 0.0;
    let mut bc = 0.0;
    for smp in batch {
        total += per_state(actor, smp.features, s, grad.as_deref_mut(), |z| {
            let p = softmax(z);
            let lp = log_softmax(z);
            let ev: f64 = p.iter().zip(smp.q).map(|(a, b)| a * b).sum();
            bc += -lp[smp.action];
            let mut d = dlogp(&p, smp.action, -1.0);
            // d/dz_i sum_a pi_a q_a = pi_i (q_i - ev)
            for (i, di) in d.iter_mut().enumerate() {
                *di -= lambda * p[i] * (smp.q[i] - ev);
            }
            (-(lambda * ev + lp[smp.action]), d)
        });
    }
    ActorLoss {
        total: total * s,
        bc: bc * s,
    }
}

pub struct TdSample<'a> {
    pub features: &'a FeatureMatrix,
    pub action: usize,
    pub target: f64,
}

/// Mean squared error between `Q(s_i, a_i)` and fixed targets.
pub fn td_loss(critic: &Mlp, batch: &[TdSample<'_>], mut grad: Option<&mut [f64]>) -> f64 {
    let s = mean_scale(batch.len());
    let mut total = 0.0;
    for smp in batch {
        total += per_state(critic, smp.features, s, grad.as_deref_mut(), |q| {
            let e = q[smp.action] - smp.target;
            let mut d = vec![0.0; q.len()];
            d[smp.action] = 2.0 * e;
            (e * e, d)
        });
    }
    total * s
}

/// `min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)`.
pub fn ppo_clip_term(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

pub struct PgSample<'a> {
    pub features: &'a FeatureMatrix,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
}

/// Negated clipped surrogate, averaged over samples.
pub fn ppo_loss(actor: &Mlp, batch: &[PgSample<'_>], eps: f64, mut grad: Option<&mut [f64]>) -> f64 {
    let s = mean_scale(batch.len());
    let mut total = 0.0;
    for smp in batch {
        total += per_state(actor, smp.features, s, grad.as_deref_mut(), |z| {
            let lp = log_softmax(z)[smp.action];
            let ratio = (lp - smp.old_log_prob).exp();
            let a = smp.advantage;
            let unclipped = ratio * a;
            let surrogate = ppo_clip_term(ratio, a, eps);
            // the gradient flows only through the unclipped branch when it is the minimum
            let coef = if unclipped <= ratio.clamp(1.0 - eps, 1.0 + eps) * a {
                -ratio * a
            } else {
                0.0
            };
            (-surrogate, dlogp(&softmax(z), smp.action, coef))
        });
    }
    total * s
}

pub struct ValueSample<'a> {
    pub features: &'a FeatureMatrix,
    pub ret: f64,
}

fn value_grad(q: &[f64], coef: f64) -> Vec<f64> {
    let mut d = vec![0.0; q.len()];
    d[argmax(q)] = coef;
    d
}

/// Mean `(R_i - V(s_i))^2` with `V = max_a Q`.
pub fn value_loss(critic: &Mlp, batch: &[ValueSample<'_>], mut grad: Option<&mut [f64]>) -> f64 {
    let s = mean_scale(batch.len());
    let mut total = 0.0;
    for smp in batch {
        total += per_state(critic, smp.features, s, grad.as_deref_mut(), |q| {
            let e = q[argmax(q)] - smp.ret;
            (e * e, value_grad(q, 2.0 * e))
        });
    }
    total * s
}

/// Self-imitation actor loss: mean `-log pi(a_i) * max(A_i, 0)`.
/// `old_log_prob` is ignored.
pub fn sil_actor_loss(actor: &Mlp, batch: &[PgSample<'_>], mut grad: Option<&mut [f64]>) -> f64 {
    let s = mean_scale(batch.len());
    let mut total = 0.0;
    for smp in batch {
        let a = smp.advantage.max(0.0);
        if a == 0.0 {
            continue;
        }
        total += per_state(actor, smp.features, s, grad.as_deref_mut(), |z| {
            let lp = log_softmax(z)[smp.action];
            (-lp * a, dlogp(&softmax(z), smp.action, -a))
        });
    }
    total * s
}

/// Self-imitation critic loss: mean `max(R_i - V(s_i), 0)^2`.
pub fn sil_critic_loss(critic: &Mlp, batch: &[ValueSample<'_>], mut grad: Option<&mut [f64]>) -> f64 {
    let s = mean_scale(batch.len());
    let mut total = 0.0;
    for smp in batch {
        total += per_state(critic, smp.features, s, grad.as_deref_mut(), |q| {
            let gap = (smp.ret - q[argmax(q)]).max(0.0);
            (gap * gap, value_grad(q, -2.0 * gap))
        });
    }
    total * s
}
