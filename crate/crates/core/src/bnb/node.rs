#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Open,
    BranchedOn(usize),
    PrunedInfeasible,
    PrunedBound,
    IntegralLeaf,
}

/// The bound tightened on the way from the parent to this node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundChange {
    pub var: usize,
    /// `true` for `x >= value`, `false` for `x <= value`.
    pub is_lower: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub change: Option<BoundChange>,
    /// LP objective at the node; `+inf` when infeasible.
    pub ldb: f64,
    pub depth: usize,
    pub status: NodeStatus,
    pub children: Option<[usize; 2]>,
}
