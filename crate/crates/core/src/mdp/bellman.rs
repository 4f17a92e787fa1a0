use super::{kappa_split, ReturnConfig, TrajectoryTree, DOWN, UP};

/// Q-values per transition, one entry per candidate.
pub type QTable = Vec<Vec<f64>>;
/// Action distribution per transition, one entry per candidate.
pub type PolicyTable = Vec<Vec<f64>>;

/// One application of the tree Bellman operator on a recorded tree:
///
/// `TQ(s_i, a_i) = sum_ch p_ch (r_ch + gamma * sum_a pi(a | s_ch) Q(s_ch, a))`
///
/// Only the recorded action of each node has observed children. Other
/// actions have no successors in the data and map to 0. Leaf children
/// contribute their reward alone.
pub fn bellman_apply(
    tree: &TrajectoryTree,
    q: &QTable,
    policy: &PolicyTable,
    cfg: &ReturnConfig,
) -> QTable {
    let ts = tree.transitions();
    assert_eq!(q.len(), ts.len());
    assert_eq!(policy.len(), ts.len());
    ts.iter()
        .map(|t| {
            let p = kappa_split(t, cfg.kappa);
            let mut value = 0.0;
            for side in [DOWN, UP] {
                let cont = tree.index_of(t.children[side]).map_or(0.0, |c| {
                    policy[c].iter().zip(&q[c]).map(|(pi, qv)| pi * qv).sum()
                });
                value += p[side] * (t.rewards[side] + cfg.gamma * cont);
            }
            let mut row = vec![0.0; t.candidates.len()];
            row[t.action] = value;
            row
        })
        .collect()
}

/// One-hot policy on the recorded actions.
pub fn greedy_policy(tree: &TrajectoryTree) -> PolicyTable {
    tree.transitions()
        .iter()
        .map(|t| {
            let mut row = vec![0.0; t.candidates.len()];
            row[t.action] = 1.0;
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::test_trees::bare;
    use super::*;

    #[test]
    fn gamma_zero_gives_one_step_reward() {
        let mut a = bare(0, [1, 2], 0.0, [1.0, 2.0]);
        a.rewards = [1.0, 3.0];
        let tree = TrajectoryTree::new(0, 0, 5, vec![a, bare(1, [3, 4], 7.0, [0.0; 2])]).unwrap();
        let q = vec![vec![100.0], vec![100.0]];
        let cfg = ReturnConfig { gamma: 0.0, kappa: 0.8 };
        let out = bellman_apply(&tree, &q, &greedy_policy(&tree), &cfg);
        assert!((out[0][0] - (0.8 * 1.0 + 0.2 * 3.0)).abs() < 1e-15);
        assert_eq!(out[1][0], 7.0);
    }
}
