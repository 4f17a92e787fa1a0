//! Tree-MDP trajectories recorded from branch-and-bound runs.
//!
//! Every branched node yields one [`Transition`]: the node state, the chosen
//! variable and the two child states. A finished run is a binary
//! [`TrajectoryTree`]; nodes without a transition are leaves.

mod bellman;
mod buffer;
mod leaf_dist;
mod returns;

use thiserror::Error;

pub use bellman::{bellman_apply, greedy_policy, PolicyTable, QTable};
pub use buffer::{read_buffer, read_buffer_file, write_buffer, write_buffer_file, BufferError};
pub use leaf_dist::{leaves, pch_for_leaf_distribution};
pub use returns::{compute_returns, compute_returns_with, kappa_split, ReturnConfig};

use crate::features::FeatureMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("node {0} is reachable more than once; transitions do not form a tree")]
    CyclicTree(usize),
    #[error("duplicate transition for node {0}")]
    DuplicateNode(usize),
    #[error("invalid leaf distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid return config: {0}")]
    InvalidConfig(String),
}

pub const DOWN: usize = 0;
pub const UP: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub node_id: usize,
    pub depth: usize,
    /// Branching candidates (variable indices, ascending).
    pub candidates: Vec<usize>,
    /// One row per candidate; empty when features were not recorded.
    pub features: FeatureMatrix,
    /// Position of the chosen variable in `candidates`.
    pub action: usize,
    /// Reward on the down and up edge.
    pub rewards: [f64; 2],
    /// Node ids of the down and up child.
    pub children: [usize; 2],
    pub ldb: f64,
    pub child_ldbs: [f64; 2],
    /// Log-probability of `action` under the policy that produced it, if stochastic.
    pub behavior_log_prob: Option<f64>,
}

impl Transition {
    pub fn var(&self) -> usize {
        self.candidates[self.action]
    }
}

/// One finished search tree. Transitions are stored sorted by node id, so the
/// tree does not depend on the order they were recorded in.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTree {
    pub instance_id: u64,
    pub root_id: usize,
    /// Total nodes created by the run, leaves included.
    pub tree_size: usize,
    transitions: Vec<Transition>,
    returns: Vec<f64>,
}

impl TrajectoryTree {
    pub fn new(
        instance_id: u64,
        root_id: usize,
        tree_size: usize,
        mut transitions: Vec<Transition>,
    ) -> Result<Self, MdpError> {
        transitions.sort_by_key(|t| t.node_id);
        for w in transitions.windows(2) {
            if w[0].node_id == w[1].node_id {
                return Err(MdpError::DuplicateNode(w[0].node_id));
            }
        }
        Ok(Self {
            instance_id,
            root_id,
            tree_size,
            transitions,
            returns: Vec::new(),
        })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Index of the transition recorded at `node_id`, if that node was branched.
    pub fn index_of(&self, node_id: usize) -> Option<usize> {
        self.transitions
            .binary_search_by_key(&node_id, |t| t.node_id)
            .ok()
    }

    pub fn get(&self, node_id: usize) -> Option<&Transition> {
        self.index_of(node_id).map(|i| &self.transitions[i])
    }

    /// Per-transition returns, aligned with [`Self::transitions`]. Empty until finalized.
    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn is_finalized(&self) -> bool {
        self.returns.len() == self.transitions.len()
    }

    /// Computes and stores the random-walk returns.
    pub fn finalize(&mut self, cfg: &ReturnConfig) -> Result<(), MdpError> {
        self.returns = compute_returns(self, cfg)?;
        Ok(())
    }

    pub(crate) fn set_returns(&mut self, returns: Vec<f64>) {
        debug_assert!(returns.is_empty() || returns.len() == self.transitions.len());
        self.returns = returns;
    }

    pub fn max_reward(&self) -> f64 {
        self.transitions
            .iter()
            .flat_map(|t| t.rewards)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
pub(crate) mod test_trees {
    use super::*;

    /// Transition with no features, for topology-only tests.
    pub fn bare(node_id: usize, children: [usize; 2], reward: f64, child_ldbs: [f64; 2]) -> Transition {
        Transition {
            node_id,
            depth: 0,
            candidates: vec![0],
            features: FeatureMatrix::empty(),
            action: 0,
            rewards: [reward; 2],
            children,
            ldb: 0.0,
            child_ldbs,
            behavior_log_prob: None,
        }
    }
}
