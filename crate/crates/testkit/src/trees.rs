//! Random trajectory trees and walk-based oracles.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use treebranch_core::features::FeatureMatrix;
use treebranch_core::mdp::{TrajectoryTree, Transition};

/// Random binary tree with `1..=max_transitions` internal nodes. Node ids are
/// assigned in creation order, root 0. Child bounds, rewards and action sets
/// are random; some child bounds tie.
pub fn random_tree(rng: &mut ChaCha8Rng, max_transitions: usize) -> TrajectoryTree {
    let k = rng.gen_range(1..=max_transitions);
    let mut frontier = vec![0usize];
    let mut next_id = 1;
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let node = frontier.swap_remove(rng.gen_range(0..frontier.len()));
        let children = [next_id, next_id + 1];
        next_id += 2;
        frontier.extend(children);
        let n_cands = rng.gen_range(1..=4);
        let ldb = rng.gen_range(0.0..5.0);
        let child_ldbs = if rng.gen_bool(0.2) {
            let v = ldb + rng.gen_range(0.0..2.0);
            [v, v]
        } else {
            [ldb + rng.gen_range(0.0..2.0), ldb + rng.gen_range(0.0..2.0)]
        };
        let rewards = if rng.gen_bool(0.5) {
            let r = rng.gen_range(0.0..1.0);
            [r, r]
        } else {
            [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]
        };
        out.push(Transition {
            node_id: node,
            depth: 0,
            candidates: (0..n_cands).map(|c| 2 * c).collect(),
            features: FeatureMatrix::empty(),
            action: rng.gen_range(0..n_cands),
            rewards,
            children,
            ldb,
            child_ldbs,
            behavior_log_prob: None,
        });
    }
    TrajectoryTree::new(0, 0, next_id, out).unwrap()
}

/// Total nodes (internal and leaves) of a tree built by [`random_tree`].
pub fn node_count(tree: &TrajectoryTree) -> usize {
    2 * tree.len() + 1
}

/// Probability of stepping to the down child: `kappa` when the down child's
/// bound is lower or tied, else `1 - kappa`.
fn down_prob(t: &Transition, kappa: f64) -> f64 {
    if t.child_ldbs[0] <= t.child_ldbs[1] {
        kappa
    } else {
        1.0 - kappa
    }
}

/// Sample mean and standard error of the discounted reward collected by
/// random walks from the root.
pub fn monte_carlo_return(
    tree: &TrajectoryTree,
    gamma: f64,
    kappa: f64,
    walks: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let by_id: BTreeMap<usize, &Transition> =
        tree.transitions().iter().map(|t| (t.node_id, t)).collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..walks {
        let mut node = tree.root_id;
        let mut disc = 1.0;
        let mut g = 0.0;
        while let Some(t) = by_id.get(&node) {
            let side = if rng.gen::<f64>() < down_prob(t, kappa) { 0 } else { 1 };
            g += disc * t.rewards[side];
            disc *= gamma;
            node = t.children[side];
        }
        sum += g;
        sum_sq += g * g;
    }
    let n = walks as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Leaf probabilities of a root walk that splits each node by `pch`
/// (aligned with the tree's transitions), as products along root paths.
pub fn path_product_leaf_probs(tree: &TrajectoryTree, pch: &[[f64; 2]]) -> BTreeMap<usize, f64> {
    let ts = tree.transitions();
    let mut out = BTreeMap::new();
    let mut stack = vec![(tree.root_id, 1.0)];
    while let Some((node, p)) = stack.pop() {
        match ts.iter().position(|t| t.node_id == node) {
            Some(i) => {
                for side in 0..2 {
                    stack.push((ts[i].children[side], p * pch[i][side]));
                }
            }
            None => {
                out.insert(node, p);
            }
        }
    }
    out
}
