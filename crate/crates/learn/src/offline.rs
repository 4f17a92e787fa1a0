//! Demonstration collection and offline actor-critic pretraining.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;
use treebranch_core::bnb::{solve, SolveError, SolveOptions};
use treebranch_core::branching::{BrancherConfig, Vanilla};
use treebranch_core::lp::LpError;
use treebranch_core::mdp::{kappa_split, TrajectoryTree, DOWN, UP};
use treebranch_core::milp::{generate, GeneratorSpec, MilpError};

use crate::checkpoint::Checkpoint;
use crate::config::{ConfigError, TrainConfig};
use crate::losses::{actor_loss, par_grad, td_loss, weighted_mean, ActorLoss, ActorSample, TdSample};
use crate::nn::{apply_gradient, NnError};
use crate::policy::Policy;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Instance(#[from] MilpError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training buffer is empty")]
    EmptyBuffer,
    #[error("invalid training data: {0}")]
    InvalidData(String),
    #[error("aborted after {0} consecutive non-finite gradients")]
    Diverged(usize),
}

/// Recorded trees with features; every transition is one training sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DemoBuffer {
    pub trees: Vec<TrajectoryTree>,
    index: Vec<(usize, usize)>,
}

impl DemoBuffer {
    pub fn new(trees: Vec<TrajectoryTree>) -> Result<Self, TrainError> {
        let mut index = Vec::new();
        for (ti, tree) in trees.iter().enumerate() {
            for (j, t) in tree.transitions().iter().enumerate() {
                if t.features.rows() != t.candidates.len() {
                    return Err(TrainError::InvalidData(format!(
                        "tree {ti} node {}: {} feature rows for {} candidates",
                        t.node_id,
                        t.features.rows(),
                        t.candidates.len()
                    )));
                }
                index.push((ti, j));
            }
        }
        Ok(Self { trees, index })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// `(tree, transition)` positions of all samples.
    pub fn samples(&self) -> &[(usize, usize)] {
        &self.index
    }
}

/// Solves freshly generated instances with the mixed heuristic until at
/// least `target` transitions are recorded. The last instance is kept whole.
/// Instances whose LP breaks down numerically are skipped.
pub fn collect_demonstrations(
    spec: &GeneratorSpec,
    target: usize,
    opts: &SolveOptions,
    brancher_cfg: &BrancherConfig,
    seed: u64,
) -> Result<DemoBuffer, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = SolveOptions {
        record_features: true,
        ..opts.clone()
    };
    let mut trees = Vec::new();
    let mut total = 0;
    let mut next_id = 0u64;
    // solve a few instances at a time in parallel; seeds are drawn in order so
    // the result matches a sequential run
    let wave = rayon::current_num_threads().max(1) * 2;
    while total < target.max(1) {
        let jobs: Vec<(u64, u64, u64)> = (0..wave)
            .map(|k| (next_id + k as u64, rng.gen(), rng.gen()))
            .collect();
        next_id += wave as u64;
        let results: Vec<Result<Option<TrajectoryTree>, TrainError>> = jobs
            .par_iter()
            .map(|&(id, inst_seed, solve_seed)| {
                let inst = generate(&spec.with_seed(inst_seed))?;
                let o = SolveOptions { instance_id: id, ..opts.clone() };
                match solve(&inst, &mut Vanilla::new(*brancher_cfg), &o, solve_seed) {
                    Ok(r) => Ok(Some(r.trajectory)),
                    Err(SolveError::Lp(LpError::NumericalBreakdown(_))) => Ok(None),
                    Err(e) => Err(e.into()),
                }
            })
            .collect();
        for r in results {
            if total >= target.max(1) {
                break;
            }
            if let Some(tree) = r? {
                if !tree.is_empty() {
                    total += tree.len();
                    trees.push(tree);
                }
            }
        }
    }
    DemoBuffer::new(trees)
}

/// Critic target: kappa-weighted child rewards plus discounted target-critic
/// value of the policy's preferred action at non-leaf children.
pub fn critic_target(ck: &Checkpoint, tree: &TrajectoryTree, j: usize, cfg: &TrainConfig) -> f64 {
    let t = &tree.transitions()[j];
    let p = kappa_split(t, cfg.returns.kappa);
    let mut y = 0.0;
    for side in [DOWN, UP] {
        let boot = match tree.get(t.children[side]) {
            Some(c) if cfg.returns.gamma > 0.0 => {
                let a = ck.policy.greedy_action(&c.features);
                ck.target_critic.forward(c.features.row(a), 1)[0]
            }
            _ => 0.0,
        };
        y += p[side] * (t.rewards[side] + cfg.returns.gamma * boot);
    }
    y
}

/// One TD step on the critic followed by a Polyak update of the target.
pub fn critic_update(
    ck: &mut Checkpoint,
    buffer: &DemoBuffer,
    batch: &[(usize, usize)],
    cfg: &TrainConfig,
    batch_id: u64,
) -> Result<f64, TrainError> {
    let targets: Vec<f64> = batch
        .par_iter()
        .map(|&(ti, j)| critic_target(ck, &buffer.trees[ti], j, cfg))
        .collect();
    let samples: Vec<TdSample<'_>> = batch
        .iter()
        .zip(&targets)
        .map(|(&(ti, j), &y)| {
            let t = &buffer.trees[ti].transitions()[j];
            TdSample {
                features: &t.features,
                action: t.action,
                target: y,
            }
        })
        .collect();
    let critic = &ck.policy.critic;
    let (parts, mut grad) = par_grad(critic.num_params(), &samples, |c, g| td_loss(critic, c, Some(g)));
    apply_gradient(&mut ck.policy.critic, &mut ck.critic_opt, &mut grad, cfg.max_grad_norm, batch_id)?;
    ck.target_critic.polyak_from(&ck.policy.critic, cfg.tau);
    Ok(weighted_mean(&parts))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorStep {
    pub loss: ActorLoss,
    pub lambda: f64,
    pub mean_abs_q: f64,
}

/// One step on the BC-regularized actor objective.
pub fn actor_update(
    ck: &mut Checkpoint,
    buffer: &DemoBuffer,
    batch: &[(usize, usize)],
    cfg: &TrainConfig,
    batch_id: u64,
) -> Result<ActorStep, TrainError> {
    let qs: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|&(ti, j)| ck.policy.q_values(&buffer.trees[ti].transitions()[j].features))
        .collect();
    let taken: Vec<f64> = batch
        .iter()
        .zip(&qs)
        .map(|(&(ti, j), q)| q[buffer.trees[ti].transitions()[j].action])
        .collect();
    let lambda = crate::losses::offline_lambda(cfg.alpha, &taken);
    let samples: Vec<ActorSample<'_>> = batch
        .iter()
        .zip(&qs)
        .map(|(&(ti, j), q)| {
            let t = &buffer.trees[ti].transitions()[j];
            ActorSample {
                features: &t.features,
                action: t.action,
                q,
            }
        })
        .collect();
    let actor = &ck.policy.actor;
    let (parts, mut grad) = par_grad(actor.num_params(), &samples, |c, g| actor_loss(actor, c, lambda, Some(g)));
    apply_gradient(&mut ck.policy.actor, &mut ck.actor_opt, &mut grad, cfg.max_grad_norm, batch_id)?;
    let total: Vec<(usize, f64)> = parts.iter().map(|(n, l)| (*n, l.total)).collect();
    let bc: Vec<(usize, f64)> = parts.iter().map(|(n, l)| (*n, l.bc)).collect();
    Ok(ActorStep {
        loss: ActorLoss {
            total: weighted_mean(&total),
            bc: weighted_mean(&bc),
        },
        lambda,
        mean_abs_q: taken.iter().map(|q| q.abs()).sum::<f64>() / taken.len().max(1) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub bc_loss: f64,
    pub mean_abs_q: f64,
    pub updates: usize,
}

/// Alternating critic/actor updates over shuffled minibatches.
/// Starts from `init` when given, else from a fresh seeded policy.
pub fn pretrain(
    buffer: &DemoBuffer,
    epochs: usize,
    cfg: &TrainConfig,
    seed: u64,
    init: Option<Checkpoint>,
    meta: String,
) -> Result<(Checkpoint, Vec<EpochLog>), TrainError> {
    cfg.validate()?;
    if buffer.is_empty() {
        return Err(TrainError::EmptyBuffer);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ck = init.unwrap_or_else(|| Checkpoint::fresh(Policy::new(cfg, rng.gen()), cfg, String::new()));
    ck.meta = meta;
    let mut order = buffer.samples().to_vec();
    let mut logs = Vec::with_capacity(epochs);
    let mut batch_id = 0u64;
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut updates = 0;
        for batch in order.chunks(cfg.batch_size) {
            let c = critic_update(&mut ck, buffer, batch, cfg, batch_id)?;
            let a = actor_update(&mut ck, buffer, batch, cfg, batch_id)?;
            batch_id += 1;
            sums[0] += c;
            sums[1] += a.loss.total;
            sums[2] += a.loss.bc;
            sums[3] += a.mean_abs_q;
            updates += 1;
        }
        let n = updates.max(1) as f64;
        logs.push(EpochLog {
            epoch,
            critic_loss: sums[0] / n,
            actor_loss: sums[1] / n,
            bc_loss: sums[2] / n,
            mean_abs_q: sums[3] / n,
            updates,
        });
    }
    Ok((ck, logs))
}
