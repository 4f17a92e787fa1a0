//! Finetuning on a fixed instance pool: tree PPO plus self-imitation from
//! per-instance queues of the smallest trees seen so far.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use treebranch_core::bnb::{solve, SolveOptions};
use treebranch_core::features::FeatureMatrix;
use treebranch_core::mdp::TrajectoryTree;
use treebranch_core::milp::MilpInstance;

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::eval::{policy_geomean_nodes, NamedInstance};
use crate::losses::{par_grad, ppo_loss, sil_actor_loss, sil_critic_loss, value_loss, weighted_mean, PgSample, ValueSample};
use crate::nn::{apply_gradient, NnError};
use crate::offline::TrainError;
use crate::policy::{ActionMode, Policy, PolicyBrancher};

#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    pub tree_size: usize,
    seq: u64,
    pub tree: TrajectoryTree,
}

/// Per-instance bounded queues ordered by tree size (smaller first, older first on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityQueueSet {
    capacity: usize,
    queues: BTreeMap<u64, Vec<QueueEntry>>,
    next_seq: u64,
}

impl PriorityQueueSet {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self {
            capacity,
            queues: BTreeMap::new(),
            next_seq: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Inserts into the queue of `tree.instance_id` and evicts the largest
    /// tree when over capacity.
    pub fn insert(&mut self, tree_size: usize, tree: TrajectoryTree) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let q = self.queues.entry(tree.instance_id).or_default();
        let pos = q.partition_point(|e| (e.tree_size, e.seq) < (tree_size, seq));
        q.insert(pos, QueueEntry { tree_size, seq, tree });
        q.truncate(self.capacity);
    }

    pub fn queue(&self, instance_id: u64) -> &[QueueEntry] {
        self.queues.get(&instance_id).map_or(&[], |q| q.as_slice())
    }

    pub fn instance_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.queues.keys().copied()
    }

    pub fn trees(&self) -> impl Iterator<Item = &TrajectoryTree> {
        self.queues.values().flatten().map(|e| &e.tree)
    }

    pub fn is_empty(&self) -> bool {
        self.queues.values().all(|q| q.is_empty())
    }
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub instance_id: u64,
    pub node_count: usize,
    pub tree: TrajectoryTree,
}

/// Solves `sample` distinct pool instances with actions drawn from the policy.
/// Returns the rollouts and the number of failed solves.
pub fn rollout(
    policy: &Policy,
    pool: &[MilpInstance],
    sample: usize,
    opts: &SolveOptions,
    rng: &mut ChaCha8Rng,
) -> (Vec<Rollout>, usize) {
    let picks = index::sample(rng, pool.len(), sample.min(pool.len())).into_vec();
    let jobs: Vec<(usize, u64)> = picks.into_iter().map(|i| (i, rng.gen())).collect();
    let shared = Arc::new(policy.clone());
    let results: Vec<Option<Rollout>> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let mut b = PolicyBrancher::new(shared.clone(), ActionMode::Sample);
            let o = SolveOptions {
                record_features: true,
                instance_id: i as u64,
                ..opts.clone()
            };
            solve(&pool[i], &mut b, &o, seed).ok().map(|r| Rollout {
                instance_id: i as u64,
                node_count: r.node_count,
                tree: r.trajectory,
            })
        })
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    (results.into_iter().flatten().collect(), failed)
}

struct Step<'a> {
    features: &'a FeatureMatrix,
    action: usize,
    old_log_prob: f64,
    ret: f64,
    advantage: f64,
}

fn steps<'a>(trees: impl Iterator<Item = &'a TrajectoryTree>) -> Vec<Step<'a>> {
    let mut out = Vec::new();
    for tree in trees {
        for (t, &ret) in tree.transitions().iter().zip(tree.returns()) {
            out.push(Step {
                features: &t.features,
                action: t.action,
                old_log_prob: t.behavior_log_prob.unwrap_or(0.0),
                ret,
                advantage: 0.0,
            });
        }
    }
    out
}

fn set_advantages(policy: &Policy, steps: &mut [Step<'_>]) {
    let values: Vec<f64> = steps.par_iter().map(|s| policy.value(s.features)).collect();
    for (s, v) in steps.iter_mut().zip(values) {
        s.advantage = s.ret - v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    pub ppo_loss: f64,
    pub value_loss: f64,
    pub updates: usize,
}

fn actor_step(ck: &mut Checkpoint, batch: &[PgSample<'_>], cfg: &TrainConfig, batch_id: u64, sil: bool) -> Result<f64, NnError> {
    let actor = &ck.policy.actor;
    let eps = cfg.ppo_clip;
    let (parts, mut grad) = par_grad(actor.num_params(), batch, |c, g| {
        if sil {
            sil_actor_loss(actor, c, Some(g))
        } else {
            ppo_loss(actor, c, eps, Some(g))
        }
    });
    apply_gradient(&mut ck.policy.actor, &mut ck.actor_opt, &mut grad, cfg.max_grad_norm, batch_id)?;
    Ok(weighted_mean(&parts))
}

fn critic_step(ck: &mut Checkpoint, batch: &[ValueSample<'_>], cfg: &TrainConfig, batch_id: u64, sil: bool) -> Result<f64, NnError> {
    let critic = &ck.policy.critic;
    let (parts, mut grad) = par_grad(critic.num_params(), batch, |c, g| {
        if sil {
            sil_critic_loss(critic, c, Some(g))
        } else {
            value_loss(critic, c, Some(g))
        }
    });
    apply_gradient(&mut ck.policy.critic, &mut ck.critic_opt, &mut grad, cfg.max_grad_norm, batch_id)?;
    Ok(weighted_mean(&parts))
}

/// `ppo_epochs` passes of clipped-surrogate and value updates over shuffled
/// minibatches. Advantages use the critic as it was before the update.
pub fn ppo_update(
    ck: &mut Checkpoint,
    rollouts: &[Rollout],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    batch_id: &mut u64,
) -> Result<PpoStats, NnError> {
    let mut all = steps(rollouts.iter().map(|r| &r.tree));
    if all.is_empty() {
        return Ok(PpoStats::default());
    }
    set_advantages(&ck.policy, &mut all);
    let mut order: Vec<usize> = (0..all.len()).collect();
    let mut stats = PpoStats::default();
    for _ in 0..cfg.ppo_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let pg: Vec<PgSample<'_>> = chunk
                .iter()
                .map(|&i| PgSample {
                    features: all[i].features,
                    action: all[i].action,
                    old_log_prob: all[i].old_log_prob,
                    advantage: all[i].advantage,
                })
                .collect();
            let vs: Vec<ValueSample<'_>> = chunk
                .iter()
                .map(|&i| ValueSample {
                    features: all[i].features,
                    ret: all[i].ret,
                })
                .collect();
            stats.ppo_loss += actor_step(ck, &pg, cfg, *batch_id, false)?;
            stats.value_loss += critic_step(ck, &vs, cfg, *batch_id, false)?;
            *batch_id += 1;
            stats.updates += 1;
        }
    }
    let n = stats.updates.max(1) as f64;
    stats.ppo_loss /= n;
    stats.value_loss /= n;
    Ok(stats)
}

/// Adds each rollout to its instance's queue.
pub fn pq_update(pq: &mut PriorityQueueSet, rollouts: &[Rollout]) {
    for r in rollouts {
        pq.insert(r.node_count, r.tree.clone());
    }
}

/// `sil_batches` minibatches drawn uniformly from all queued transitions.
/// Returns the mean actor loss, or `None` when nothing had positive advantage.
pub fn sil_update(
    ck: &mut Checkpoint,
    pq: &PriorityQueueSet,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    batch_id: &mut u64,
) -> Result<Option<f64>, NnError> {
    let pool = steps(pq.trees());
    if pool.is_empty() {
        return Ok(None);
    }
    let mut losses = Vec::new();
    for _ in 0..cfg.sil_batches {
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| rng.gen_range(0..pool.len())).collect();
        let mut batch: Vec<Step<'_>> = idx
            .iter()
            .map(|&i| Step {
                features: pool[i].features,
                action: pool[i].action,
                old_log_prob: 0.0,
                ret: pool[i].ret,
                advantage: 0.0,
            })
            .collect();
        set_advantages(&ck.policy, &mut batch);
        if batch.iter().all(|s| s.advantage <= 0.0) {
            continue;
        }
        let pg: Vec<PgSample<'_>> = batch
            .iter()
            .map(|s| PgSample {
                features: s.features,
                action: s.action,
                old_log_prob: 0.0,
                advantage: s.advantage,
            })
            .collect();
        let vs: Vec<ValueSample<'_>> = batch
            .iter()
            .map(|s| ValueSample {
                features: s.features,
                ret: s.ret,
            })
            .collect();
        losses.push(actor_step(ck, &pg, cfg, *batch_id, true)?);
        critic_step(ck, &vs, cfg, *batch_id, true)?;
        *batch_id += 1;
    }
    Ok((!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterLog {
    pub iteration: usize,
    /// Mean root return of this iteration's rollouts.
    pub mean_return: f64,
    pub ppo_loss: f64,
    pub value_loss: f64,
    pub sil_actor_loss: f64,
    /// Set on validation iterations.
    pub val_geomean_nodes: Option<f64>,
}

pub struct FinetuneSetup<'a> {
    pub pool: &'a [MilpInstance],
    pub validation: &'a [NamedInstance],
    pub val_seeds: &'a [u64],
    pub iterations: usize,
    pub solve_opts: &'a SolveOptions,
    pub use_sil: bool,
    pub seed: u64,
}

/// Number of consecutive non-finite updates tolerated before aborting.
const MAX_NONFINITE: usize = 3;

/// Runs the finetuning loop and returns the best checkpoint on the
/// validation set (the input when nothing improved) and the per-iteration log.
pub fn finetune(
    init: Checkpoint,
    setup: &FinetuneSetup<'_>,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, Vec<IterLog>), TrainError> {
    cfg.validate()?;
    if setup.iterations == 0 {
        return Ok((init, Vec::new()));
    }
    if setup.pool.is_empty() {
        return Err(TrainError::InvalidData("finetuning pool is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let validate = |p: &Policy| {
        (!setup.validation.is_empty())
            .then(|| policy_geomean_nodes(p, setup.validation, setup.val_seeds, setup.solve_opts))
    };
    let mut best_score = validate(&init.policy);
    let mut best = init.clone();
    let mut ck = init;
    let mut pq = PriorityQueueSet::new(cfg.pq_capacity);
    let mut logs = Vec::with_capacity(setup.iterations);
    let mut batch_id = 0u64;
    let mut bad_streak = 0;
    for it in 0..setup.iterations {
        let (rolls, _failed) = rollout(&ck.policy, setup.pool, cfg.rollout_instances, setup.solve_opts, &mut rng);
        let roots: Vec<f64> = rolls
            .iter()
            .filter_map(|r| r.tree.index_of(r.tree.root_id).map(|i| r.tree.returns()[i]))
            .collect();
        let mean_return = if roots.is_empty() {
            0.0
        } else {
            roots.iter().sum::<f64>() / roots.len() as f64
        };
        let mut log = IterLog {
            iteration: it,
            mean_return,
            ppo_loss: 0.0,
            value_loss: 0.0,
            sil_actor_loss: 0.0,
            val_geomean_nodes: None,
        };
        let snapshot = ck.clone();
        let outcome = ppo_update(&mut ck, &rolls, cfg, &mut rng, &mut batch_id).and_then(|s| {
            log.ppo_loss = s.ppo_loss;
            log.value_loss = s.value_loss;
            pq_update(&mut pq, &rolls);
            if setup.use_sil {
                log.sil_actor_loss = sil_update(&mut ck, &pq, cfg, &mut rng, &mut batch_id)?.unwrap_or(0.0);
            }
            Ok(())
        });
        match outcome {
            Ok(()) => bad_streak = 0,
            Err(NnError::NonFiniteGradient { .. }) => {
                ck = snapshot;
                bad_streak += 1;
                if bad_streak > MAX_NONFINITE {
                    return Err(TrainError::Diverged(bad_streak));
                }
            }
        }
        if (it + 1) % cfg.eval_every == 0 || it + 1 == setup.iterations {
            log.val_geomean_nodes = validate(&ck.policy);
            match (log.val_geomean_nodes, best_score) {
                (Some(v), Some(b)) if v < b => {
                    best_score = Some(v);
                    best = ck.clone();
                }
                (_, None) => best = ck.clone(),
                _ => {}
            }
        }
        logs.push(log);
    }
    Ok((best, logs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(id: u64) -> TrajectoryTree {
        TrajectoryTree::new(id, 0, 1, Vec::new()).unwrap()
    }

    #[test]
    fn keeps_three_smallest() {
        let mut pq = PriorityQueueSet::new(3);
        for s in [9, 7, 11, 8] {
            pq.insert(s, tree(0));
        }
        let sizes: Vec<usize> = pq.queue(0).iter().map(|e| e.tree_size).collect();
        assert_eq!(sizes, vec![7, 8, 9]);
    }

    #[test]
    fn ties_keep_the_older_entry() {
        let mut pq = PriorityQueueSet::new(2);
        let mut a = tree(0);
        a.tree_size = 100;
        let mut b = tree(0);
        b.tree_size = 200;
        pq.insert(5, a.clone());
        pq.insert(5, b.clone());
        assert_eq!(pq.queue(0).len(), 2);
        pq.insert(4, tree(0));
        assert_eq!(pq.queue(0)[1].tree, a);
    }
}
