//! Best-first branch-and-bound that records a tree-MDP trajectory.
//!
//! Both children of a branched node are solved immediately, so each
//! transition carries the local dual bounds of its children and its reward
//! can be emitted on the spot.

mod engine;
mod node;

use thiserror::Error;

use crate::lp::{LpError, LpResult};
use crate::mdp::MdpError;
use crate::milp::{MilpError, MilpInstance};

pub use engine::{solve, transition_reward, RewardConfig, SolveLimits, SolveOptions, SolveResult, SolveStatus};
pub use node::{BnbNode, BoundChange, NodeStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Instance(#[from] MilpError),
    #[error(transparent)]
    Trajectory(#[from] MdpError),
    #[error("LP relaxation is unbounded")]
    Unbounded,
    #[error("brancher `{name}` failed: {msg}")]
    Brancher { name: String, msg: String },
}

/// Read-only view of an open node handed to branchers and the featurizer.
#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    pub node_id: usize,
    pub depth: usize,
    /// Instance with the node's local bounds.
    pub instance: &'a MilpInstance,
    /// Optimal LP at this node.
    pub lp: &'a LpResult,
    /// Fractional integer variables, ascending.
    pub candidates: &'a [usize],
    /// LP objective at the root.
    pub root_objective: f64,
    /// Best known feasible objective, `+inf` without incumbent.
    pub primal_bound: f64,
}

impl NodeView<'_> {
    /// `x_j - floor(x_j)` at this node.
    pub fn fractionality(&self, var: usize) -> f64 {
        let x = self.lp.solution[var];
        x - x.floor()
    }
}
