//! Actor/critic pair and the brancher that queries it.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treebranch_core::bnb::SolveError;
use treebranch_core::branching::{BranchContext, BranchDecision, Brancher, BrancherRegistry, RegistryError};
use treebranch_core::features::FeatureMatrix;

use crate::checkpoint;
use crate::config::TrainConfig;
use crate::nn::{argmax, log_softmax, softmax, Mlp};

/// Per-candidate actor logits and critic values.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actor: Mlp,
    pub critic: Mlp,
}

impl Policy {
    pub fn new(cfg: &TrainConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = cfg.layer_sizes();
        Self {
            actor: Mlp::new(&sizes, &mut rng),
            critic: Mlp::new(&sizes, &mut rng),
        }
    }

    pub fn logits(&self, fm: &FeatureMatrix) -> Vec<f64> {
        self.actor.forward(fm.as_slice(), fm.rows())
    }

    pub fn probs(&self, fm: &FeatureMatrix) -> Vec<f64> {
        softmax(&self.logits(fm))
    }

    pub fn q_values(&self, fm: &FeatureMatrix) -> Vec<f64> {
        self.critic.forward(fm.as_slice(), fm.rows())
    }

    /// State value: the best candidate's Q.
    pub fn value(&self, fm: &FeatureMatrix) -> f64 {
        v_readout(&self.q_values(fm))
    }

    pub fn greedy_action(&self, fm: &FeatureMatrix) -> usize {
        argmax(&self.logits(fm))
    }
}

pub fn v_readout(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Greedy,
    Sample,
}

/// Branches with the actor network. Sampling draws from the engine's RNG so
/// runs stay reproducible from the solve seed.
#[derive(Debug, Clone)]
pub struct PolicyBrancher {
    policy: Arc<Policy>,
    mode: ActionMode,
    name: String,
}

impl PolicyBrancher {
    pub fn new(policy: Arc<Policy>, mode: ActionMode) -> Self {
        let name = match mode {
            ActionMode::Greedy => "policy",
            ActionMode::Sample => "policy-sample",
        };
        Self {
            policy,
            mode,
            name: name.to_string(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl Brancher for PolicyBrancher {
    fn name(&self) -> &str {
        &self.name
    }

    fn wants_features(&self) -> bool {
        true
    }

    fn select(&mut self, ctx: &mut BranchContext<'_>) -> Result<BranchDecision, SolveError> {
        let fm = ctx.features.ok_or_else(|| SolveError::Brancher {
            name: self.name.clone(),
            msg: "features missing".into(),
        })?;
        let logp = log_softmax(&self.policy.logits(fm));
        let position = match self.mode {
            ActionMode::Greedy => argmax(&logp),
            ActionMode::Sample => {
                let u: f64 = ctx.rng.gen();
                let mut acc = 0.0;
                let mut pick = logp.len() - 1;
                for (i, lp) in logp.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            }
        };
        Ok(BranchDecision {
            position,
            children: None,
            log_prob: Some(logp[position]),
        })
    }
}

/// Built-in heuristics plus `checkpoint:<path>` for greedy learned policies.
pub fn registry() -> BrancherRegistry {
    let mut reg = BrancherRegistry::with_builtins();
    reg.register_prefix("checkpoint:", |spec, _| {
        let path = &spec["checkpoint:".len()..];
        let ck = checkpoint::load_file(path, None).map_err(|e| RegistryError::Build(spec.to_string(), e.to_string()))?;
        Ok(Box::new(
            PolicyBrancher::new(Arc::new(ck.policy), ActionMode::Greedy).named(spec),
        ))
    });
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn readout_is_max() {
        assert_eq!(v_readout(&[0.2, 0.7, -1.0]), 0.7);
        assert_eq!(v_readout(&[-3.0]), -3.0);
        assert_eq!(v_readout(&[-1.0, 0.7, 0.2]), 0.7);
    }
}
