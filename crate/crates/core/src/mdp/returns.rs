use super::{MdpError, TrajectoryTree, Transition, DOWN, UP};

/// Discount and child-preference parameters of the random-walk return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnConfig {
    pub gamma: f64,
    /// Probability of stepping into the child with the lower local dual bound.
    pub kappa: f64,
}

impl Default for ReturnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            kappa: 0.8,
        }
    }
}

impl ReturnConfig {
    pub fn validate(&self) -> Result<(), MdpError> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(MdpError::InvalidConfig(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(MdpError::InvalidConfig(format!("kappa {} not in (0, 1)", self.kappa)));
        }
        Ok(())
    }
}

/// Walk probabilities `[p_down, p_up]`: `kappa` on the lower-bound child, ties to the down child.
pub fn kappa_split(t: &Transition, kappa: f64) -> [f64; 2] {
    if t.child_ldbs[DOWN] <= t.child_ldbs[UP] {
        [kappa, 1.0 - kappa]
    } else {
        [1.0 - kappa, kappa]
    }
}

/// `R_i = sum_ch p(ch) (r_ch + gamma R_ch)`, with `R = 0` at leaves.
pub fn compute_returns(traj: &TrajectoryTree, cfg: &ReturnConfig) -> Result<Vec<f64>, MdpError> {
    cfg.validate()?;
    compute_returns_with(traj, cfg.gamma, |t| kappa_split(t, cfg.kappa))
}

/// Returns under arbitrary child probabilities, aligned with the transitions.
pub fn compute_returns_with(
    traj: &TrajectoryTree,
    gamma: f64,
    pch: impl Fn(&Transition) -> [f64; 2],
) -> Result<Vec<f64>, MdpError> {
    let ts = traj.transitions();
    let order = post_order(traj)?;
    let mut returns = vec![0.0; ts.len()];
    for i in order {
        let t = &ts[i];
        let p = pch(t);
        let mut r = 0.0;
        for side in [DOWN, UP] {
            let child = traj.index_of(t.children[side]).map_or(0.0, |c| returns[c]);
            r += p[side] * (t.rewards[side] + gamma * child);
        }
        returns[i] = r;
    }
    Ok(returns)
}

/// Transition indices, children before parents. Fails if any node has two
/// parents or a node is its own ancestor.
pub(crate) fn post_order(traj: &TrajectoryTree) -> Result<Vec<usize>, MdpError> {
    let ts = traj.transitions();
    let mut parent_count = vec![0u8; ts.len()];
    let mut seen = std::collections::HashSet::with_capacity(2 * ts.len());
    for t in ts {
        if t.children[DOWN] == t.children[UP] {
            return Err(MdpError::CyclicTree(t.children[DOWN]));
        }
        for c in t.children {
            if !seen.insert(c) {
                return Err(MdpError::CyclicTree(c));
            }
            if let Some(ci) = traj.index_of(c) {
                parent_count[ci] += 1;
            }
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; ts.len()];
    let mut order = Vec::with_capacity(ts.len());
    for start in 0..ts.len() {
        if parent_count[start] != 0 || state[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        state[start] = 1;
        while let Some(&mut (i, ref mut next)) = stack.last_mut() {
            if *next < 2 {
                let side = *next;
                *next += 1;
                if let Some(c) = traj.index_of(ts[i].children[side]) {
                    if state[c] != 0 {
                        return Err(MdpError::CyclicTree(ts[c].node_id));
                    }
                    state[c] = 1;
                    stack.push((c, 0));
                }
            } else {
                state[i] = 2;
                order.push(i);
                stack.pop();
            }
        }
    }
    // anything left unvisited sits on a parentless cycle
    if let Some(i) = state.iter().position(|&s| s != 2) {
        return Err(MdpError::CyclicTree(ts[i].node_id));
    }
    Ok(order)
}
