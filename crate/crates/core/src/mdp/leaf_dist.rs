use std::collections::BTreeMap;

use super::returns::post_order;
use super::{MdpError, TrajectoryTree, DOWN, UP};

/// Node ids of all leaves (children without a transition), ascending.
pub fn leaves(tree: &TrajectoryTree) -> Vec<usize> {
    let mut out: Vec<usize> = tree
        .transitions()
        .iter()
        .flat_map(|t| t.children)
        .filter(|&c| tree.index_of(c).is_none())
        .collect();
    out.sort_unstable();
    out
}

/// Child probabilities under which a random walk from the root ends in each
/// leaf with the target probability.
///
/// Subtree masses are aggregated bottom-up and each node splits in proportion
/// to its children's masses. A node whose subtree carries no mass splits 50/50.
/// The result is aligned with the tree's transitions.
pub fn pch_for_leaf_distribution(
    tree: &TrajectoryTree,
    target: &BTreeMap<usize, f64>,
) -> Result<Vec<[f64; 2]>, MdpError> {
    let leaf_ids = leaves(tree);
    for (&id, &mass) in target {
        if !(mass >= 0.0) || !mass.is_finite() {
            return Err(MdpError::InvalidDistribution(format!("leaf {id} has mass {mass}")));
        }
        if leaf_ids.binary_search(&id).is_err() {
            return Err(MdpError::InvalidDistribution(format!("node {id} is not a leaf")));
        }
    }
    let total: f64 = target.values().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(MdpError::InvalidDistribution(format!("masses sum to {total}")));
    }

    let ts = tree.transitions();
    let mut mass = vec![0.0; ts.len()];
    let mut split = vec![[0.5, 0.5]; ts.len()];
    for i in post_order(tree)? {
        let child_mass = ts[i].children.map(|c| match tree.index_of(c) {
            Some(ci) => mass[ci],
            None => target.get(&c).copied().unwrap_or(0.0),
        });
        let m = child_mass[DOWN] + child_mass[UP];
        mass[i] = m;
        if m > 0.0 {
            split[i] = [child_mass[DOWN] / m, child_mass[UP] / m];
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::super::test_trees::bare;
    use super::*;

    fn single() -> TrajectoryTree {
        TrajectoryTree::new(0, 0, 3, vec![bare(0, [1, 2], 0.0, [0.0; 2])]).unwrap()
    }

    #[test]
    fn uniform_two_leaves() {
        let target = BTreeMap::from([(1, 0.5), (2, 0.5)]);
        assert_eq!(pch_for_leaf_distribution(&single(), &target).unwrap(), vec![[0.5, 0.5]]);
    }

    #[test]
    fn degenerate_target() {
        let target = BTreeMap::from([(1, 1.0), (2, 0.0)]);
        assert_eq!(pch_for_leaf_distribution(&single(), &target).unwrap(), vec![[1.0, 0.0]]);
    }

    #[test]
    fn invalid_targets() {
        let tree = single();
        for bad in [
            BTreeMap::from([(1, 0.7), (2, 0.7)]),
            BTreeMap::from([(1, -0.5), (2, 1.5)]),
            BTreeMap::from([(0, 1.0)]),
        ] {
            assert!(matches!(
                pch_for_leaf_distribution(&tree, &bad),
                Err(MdpError::InvalidDistribution(_))
            ));
        }
    }

    #[test]
    fn leaves_listed() {
        let tree = TrajectoryTree::new(0, 0, 5, vec![bare(0, [1, 2], 0.0, [0.0; 2]), bare(2, [3, 4], 0.0, [0.0; 2])])
            .unwrap();
        assert_eq!(leaves(&tree), vec![1, 3, 4]);
    }
}
