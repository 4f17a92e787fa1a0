use rand::Rng;

use super::{argmax, BranchContext, BranchDecision, Brancher, BrancherConfig, PseudocostTable};
use crate::bnb::{NodeView, SolveError};
use crate::lp::{lp_solve, LpResult, LpStatus};

/// Child LPs of one candidate and the bound gain on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongScore {
    /// `[down, up]` gain over the node bound. An infeasible child gains up to the
    /// primal bound (infinite while no incumbent exists).
    pub deltas: [f64; 2],
    pub lps: [LpResult; 2],
}

impl StrongScore {
    pub fn product(&self, eps: f64) -> f64 {
        self.deltas[0].max(eps) * self.deltas[1].max(eps)
    }
}

/// Solves both children of `var`, warm-started from the node basis.
pub fn strong_branch(ctx: &BranchContext<'_>, var: usize) -> Result<StrongScore, SolveError> {
    let node = &ctx.node;
    let x = node.lp.solution[var];
    let (down, up) = node
        .instance
        .branch(var, x, ctx.lp_settings.tol.integrality)?;
    let warm = node.lp.basis.as_ref();
    let lps = [
        lp_solve(&down, warm, ctx.lp_settings)?,
        lp_solve(&up, warm, ctx.lp_settings)?,
    ];
    let ldb = node.lp.objective;
    let deltas = [&lps[0], &lps[1]].map(|lp| match lp.status {
        LpStatus::Optimal => (lp.objective - ldb).max(0.0),
        LpStatus::Infeasible => (node.primal_bound - ldb).max(0.0),
        LpStatus::Unbounded => 0.0,
    });
    Ok(StrongScore { deltas, lps })
}

fn record_gains(table: &mut PseudocostTable, node: &NodeView<'_>, var: usize, s: &StrongScore) {
    let f = node.fractionality(var);
    for (side, up) in [(0, false), (1, true)] {
        if s.lps[side].is_optimal() {
            table.update(var, up, s.deltas[side], f);
        }
    }
}

/// Full strong branching: product score over solved child LPs.
pub fn fsb_select(ctx: &mut BranchContext<'_>, eps: f64) -> Result<BranchDecision, SolveError> {
    let cands = ctx.node.candidates.to_vec();
    let mut best: Option<(f64, usize, StrongScore)> = None;
    for (pos, &var) in cands.iter().enumerate() {
        let s = strong_branch(ctx, var)?;
        record_gains(ctx.pseudocosts, &ctx.node, var, &s);
        let score = s.product(eps);
        if best.as_ref().map_or(true, |(b, _, _)| score > *b) {
            best = Some((score, pos, s));
        }
    }
    let (_, position, s) = best.expect("candidate list is nonempty");
    Ok(BranchDecision {
        position,
        children: Some(s.lps),
        log_prob: None,
    })
}

fn pseudocost_score(table: &PseudocostTable, node: &NodeView<'_>, var: usize, eps: f64) -> f64 {
    let f = node.fractionality(var);
    (table.down_average(var) * f).max(eps) * (table.up_average(var) * (1.0 - f)).max(eps)
}

/// Pseudocost branching: product of estimated gains.
pub fn pb_select(table: &PseudocostTable, node: &NodeView<'_>, eps: f64) -> usize {
    let scores: Vec<f64> = node
        .candidates
        .iter()
        .map(|&v| pseudocost_score(table, node, v, eps))
        .collect();
    argmax(&scores)
}

/// Reliability branching: strong branching for candidates with fewer than
/// `reliability` observations in either direction, pseudocosts for the rest.
pub fn rpb_select(
    ctx: &mut BranchContext<'_>,
    reliability: u32,
    eps: f64,
) -> Result<BranchDecision, SolveError> {
    let cands = ctx.node.candidates.to_vec();
    let mut scores = Vec::with_capacity(cands.len());
    let mut solved: Vec<Option<[LpResult; 2]>> = Vec::with_capacity(cands.len());
    for &var in &cands {
        let (d, u) = ctx.pseudocosts.counts(var);
        if d.min(u) < reliability {
            let s = strong_branch(ctx, var)?;
            record_gains(ctx.pseudocosts, &ctx.node, var, &s);
            scores.push(s.product(eps));
            solved.push(Some(s.lps));
        } else {
            scores.push(pseudocost_score(ctx.pseudocosts, &ctx.node, var, eps));
            solved.push(None);
        }
    }
    let position = argmax(&scores);
    Ok(BranchDecision {
        position,
        children: solved.swap_remove(position),
        log_prob: None,
    })
}

/// Uniformly random candidate.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomBrancher;

impl Brancher for RandomBrancher {
    fn name(&self) -> &str {
        "random"
    }

    fn select(&mut self, ctx: &mut BranchContext<'_>) -> Result<BranchDecision, SolveError> {
        Ok(BranchDecision::at(ctx.rng.gen_range(0..ctx.node.candidates.len())))
    }
}

#[derive(Debug, Clone)]
pub struct FullStrong {
    cfg: BrancherConfig,
}

impl FullStrong {
    pub fn new(cfg: BrancherConfig) -> Self {
        Self { cfg }
    }
}

impl Brancher for FullStrong {
    fn name(&self) -> &str {
        "fsb"
    }

    fn select(&mut self, ctx: &mut BranchContext<'_>) -> Result<BranchDecision, SolveError> {
        fsb_select(ctx, self.cfg.fsb_epsilon)
    }
}

#[derive(Debug, Clone)]
pub struct Pseudocost {
    cfg: BrancherConfig,
}

impl Pseudocost {
    pub fn new(cfg: BrancherConfig) -> Self {
        Self { cfg }
    }
}

impl Brancher for Pseudocost {
    fn name(&self) -> &str {
        "pb"
    }

    fn select(&mut self, ctx: &mut BranchContext<'_>) -> Result<BranchDecision, SolveError> {
        Ok(BranchDecision::at(pb_select(ctx.pseudocosts, &ctx.node, self.cfg.fsb_epsilon)))
    }
}

#[derive(Debug, Clone)]
pub struct Reliability {
    cfg: BrancherConfig,
}

impl Reliability {
    pub fn new(cfg: BrancherConfig) -> Self {
        Self { cfg }
    }
}

impl Brancher for Reliability {
    fn name(&self) -> &str {
        "rpb"
    }

    fn select(&mut self, ctx: &mut BranchContext<'_>) -> Result<BranchDecision, SolveError> {
        rpb_select(ctx, self.cfg.rpb_reliability, self.cfg.fsb_epsilon)
    }
}

/// Strong branching with probability `vhb_fsb_prob`, pseudocost branching otherwise.
#[derive(Debug, Clone)]
pub struct Vanilla {
    cfg: BrancherConfig,
    pub strong_decisions: u64,
    pub pseudocost_decisions: u64,
}

impl Vanilla {
    pub fn new(cfg: BrancherConfig) -> Self {
        Self {
            cfg,
            strong_decisions: 0,
            pseudocost_decisions: 0,
        }
    }

    /// Fraction of decisions made by strong branching so far.
    pub fn strong_fraction(&self) -> f64 {
        let total = self.strong_decisions + self.pseudocost_decisions;
        if total == 0 {
            0.0
        } else {
            self.strong_decisions as f64 / total as f64
        }
    }
}

impl Brancher for Vanilla {
    fn name(&self) -> &str {
        "vhb"
    }

    fn select(&mut self, ctx: &mut BranchContext<'_>) -> Result<BranchDecision, SolveError> {
        if ctx.rng.gen::<f64>() < self.cfg.vhb_fsb_prob {
            self.strong_decisions += 1;
            fsb_select(ctx, self.cfg.fsb_epsilon)
        } else {
            self.pseudocost_decisions += 1;
            Ok(BranchDecision::at(pb_select(ctx.pseudocosts, &ctx.node, self.cfg.fsb_epsilon)))
        }
    }
}
