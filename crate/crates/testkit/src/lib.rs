//! Independent oracles used by the integration and acceptance suites.
//!
//! Nothing here calls into the simplex kernel or the tree search; each
//! oracle recomputes its answer by enumeration or a textbook recurrence.

pub mod fixtures;
pub mod oracles;
pub mod trees;
