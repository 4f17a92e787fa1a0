//! Variable selection strategies.
//!
//! Every strategy implements [`Brancher`] and is created by name through a
//! [`BrancherRegistry`]. The built-in names are `random`, `fsb`, `pb`, `rpb`
//! and `vhb`; other crates add their own (the learned policy registers the
//! `checkpoint:` prefix).

mod pseudocost;
mod strategies;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bnb::{NodeView, SolveError};
use crate::features::FeatureMatrix;
use crate::lp::{LpResult, LpSettings};

pub use pseudocost::PseudocostTable;
pub use strategies::{
    fsb_select, pb_select, rpb_select, strong_branch, FullStrong, Pseudocost, RandomBrancher,
    Reliability, StrongScore, Vanilla,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrancherConfig {
    /// Floor applied to each side of the product score.
    pub fsb_epsilon: f64,
    /// Probability that the mixed heuristic uses strong branching at a node.
    pub vhb_fsb_prob: f64,
    /// Observations per direction before a pseudocost counts as reliable.
    pub rpb_reliability: u32,
}

impl Default for BrancherConfig {
    fn default() -> Self {
        Self {
            fsb_epsilon: 1e-6,
            vhb_fsb_prob: 0.05,
            rpb_reliability: 4,
        }
    }
}

impl BrancherConfig {
    pub fn validate(&self) -> Result<(), RegistryError> {
        if !(0.0..=1.0).contains(&self.vhb_fsb_prob) {
            return Err(RegistryError::InvalidConfig(format!(
                "vhb_fsb_prob {} not in [0, 1]",
                self.vhb_fsb_prob
            )));
        }
        if self.rpb_reliability < 1 {
            return Err(RegistryError::InvalidConfig("rpb_reliability must be >= 1".into()));
        }
        if !(self.fsb_epsilon > 0.0) {
            return Err(RegistryError::InvalidConfig("fsb_epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Everything a strategy may look at (and the state it may update) at one node.
pub struct BranchContext<'a> {
    pub node: NodeView<'a>,
    pub pseudocosts: &'a mut PseudocostTable,
    pub lp_settings: &'a LpSettings,
    pub rng: &'a mut ChaCha8Rng,
    /// Present when the engine records features or the strategy asked for them.
    pub features: Option<&'a FeatureMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchDecision {
    /// Position in the candidate list.
    pub position: usize,
    /// Down/up child LPs, when the strategy already solved them.
    pub children: Option<[LpResult; 2]>,
    /// Log-probability of the choice under a stochastic policy.
    pub log_prob: Option<f64>,
}

impl BranchDecision {
    pub fn at(position: usize) -> Self {
        Self {
            position,
            children: None,
            log_prob: None,
        }
    }
}

pub trait Brancher {
    fn name(&self) -> &str;

    /// Whether [`BranchContext::features`] must be populated.
    fn wants_features(&self) -> bool {
        false
    }

    fn select(&mut self, ctx: &mut BranchContext<'_>) -> Result<BranchDecision, SolveError>;
}

impl<B: Brancher + ?Sized> Brancher for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn wants_features(&self) -> bool {
        (**self).wants_features()
    }

    fn select(&mut self, ctx: &mut BranchContext<'_>) -> Result<BranchDecision, SolveError> {
        (**self).select(ctx)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("unknown brancher `{0}` (known: {1})")]
    Unknown(String, String),
    #[error("invalid brancher config: {0}")]
    InvalidConfig(String),
    #[error("cannot build brancher `{0}`: {1}")]
    Build(String, String),
}

/// Builds a brancher from the full spec string (e.g. `checkpoint:/tmp/w.bin`).
pub type BrancherFactory =
    Box<dyn Fn(&str, &BrancherConfig) -> Result<Box<dyn Brancher + Send>, RegistryError> + Send + Sync>;

enum Key {
    Exact(String),
    Prefix(String),
}

/// Name-keyed constructors for branching strategies.
pub struct BrancherRegistry {
    entries: Vec<(Key, BrancherFactory)>,
}

impl Default for BrancherRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl BrancherRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("random", |_, _| Ok(Box::new(RandomBrancher)));
        reg.register("fsb", |_, cfg| Ok(Box::new(FullStrong::new(*cfg))));
        reg.register("pb", |_, cfg| Ok(Box::new(Pseudocost::new(*cfg))));
        reg.register("rpb", |_, cfg| Ok(Box::new(Reliability::new(*cfg))));
        reg.register("vhb", |_, cfg| Ok(Box::new(Vanilla::new(*cfg))));
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&str, &BrancherConfig) -> Result<Box<dyn Brancher + Send>, RegistryError>
            + Send
            + Sync
            + 'static,
    {
        self.entries.retain(|(k, _)| !matches!(k, Key::Exact(n) if n == name));
        self.entries.push((Key::Exact(name.to_string()), Box::new(factory)));
    }

    /// Registers a family of specs of the form `<prefix><argument>`.
    pub fn register_prefix<F>(&mut self, prefix: &str, factory: F)
    where
        F: Fn(&str, &BrancherConfig) -> Result<Box<dyn Brancher + Send>, RegistryError>
            + Send
            + Sync
            + 'static,
    {
        self.entries.retain(|(k, _)| !matches!(k, Key::Prefix(p) if p == prefix));
        self.entries.push((Key::Prefix(prefix.to_string()), Box::new(factory)));
    }

    pub fn names(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|(k, _)| match k {
                Key::Exact(n) => n.clone(),
                Key::Prefix(p) => format!("{p}<arg>"),
            })
            .collect()
    }

    pub fn create(&self, spec: &str, cfg: &BrancherConfig) -> Result<Box<dyn Brancher + Send>, RegistryError> {
        cfg.validate()?;
        for (key, factory) in &self.entries {
            let hit = match key {
                Key::Exact(n) => n == spec,
                Key::Prefix(p) => spec.starts_with(p.as_str()),
            };
            if hit {
                return factory(spec, cfg);
            }
        }
        Err(RegistryError::Unknown(spec.to_string(), self.names().join(", ")))
    }
}

/// Index of the largest score; ties go to the earliest position.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builtins() {
        let reg = BrancherRegistry::with_builtins();
        for name in ["random", "fsb", "pb", "rpb", "vhb"] {
            let b = reg.create(name, &BrancherConfig::default()).unwrap();
            assert_eq!(b.name(), name);
        }
        assert!(matches!(
            reg.create("nope", &BrancherConfig::default()),
            Err(RegistryError::Unknown(..))
        ));
    }

    #[test]
    fn prefix_entries() {
        let mut reg = BrancherRegistry::empty();
        reg.register_prefix("fixed:", |spec, _| {
            let _pos: usize = spec["fixed:".len()..]
                .parse()
                .map_err(|_| RegistryError::Build(spec.into(), "bad position".into()))?;
            Ok(Box::new(RandomBrancher))
        });
        assert!(reg.create("fixed:3", &BrancherConfig::default()).is_ok());
        assert!(matches!(
            reg.create("fixed:x", &BrancherConfig::default()),
            Err(RegistryError::Build(..))
        ));
        assert_eq!(reg.names(), vec!["fixed:<arg>".to_string()]);
    }

    #[test]
    fn config_validation() {
        let reg = BrancherRegistry::with_builtins();
        let bad = BrancherConfig {
            vhb_fsb_prob: 1.5,
            ..Default::default()
        };
        assert!(reg.create("vhb", &bad).is_err());
        let bad = BrancherConfig {
            rpb_reliability: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn argmax_ties_to_first() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0, 2.0]), 0);
        assert_eq!(argmax(&[f64::INFINITY, f64::INFINITY]), 0);
    }
}
