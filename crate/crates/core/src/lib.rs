//! Branch-and-bound for small MILPs with tree-MDP trajectory recording.

pub mod lp;
pub mod milp;
pub mod bnb;
pub mod branching;
pub mod features;
pub mod mdp;
pub mod metrics;
