//! Learned branching policies and their two-stage training.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod losses;
pub mod nn;
pub mod offline;
pub mod online;
pub mod policy;
