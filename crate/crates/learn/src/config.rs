use thiserror::Error;
use treebranch_core::features::NUM_FEATURES;
use treebranch_core::mdp::ReturnConfig;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid training config: {0}")]
pub struct ConfigError(pub String);

/// Hyperparameters shared by both training stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: [usize; 2],
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    /// Polyak rate of the target critic.
    pub tau: f64,
    /// Scale of the value term against behavior cloning.
    pub alpha: f64,
    pub returns: ReturnConfig,
    pub ppo_clip: f64,
    pub ppo_epochs: usize,
    pub sil_batches: usize,
    pub pq_capacity: usize,
    /// Instances rolled out per finetuning iteration.
    pub rollout_instances: usize,
    pub max_grad_norm: f64,
    /// Validation cadence in finetuning iterations.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: [64, 64],
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            batch_size: 64,
            tau: 0.005,
            alpha: 2.5,
            returns: ReturnConfig::default(),
            ppo_clip: 0.2,
            ppo_epochs: 4,
            sil_batches: 4,
            pq_capacity: 3,
            rollout_instances: 16,
            max_grad_norm: 10.0,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn layer_sizes(&self) -> Vec<usize> {
        vec![NUM_FEATURES, self.hidden[0], self.hidden[1], 1]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("tau", self.tau),
            ("max_grad_norm", self.max_grad_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tau > 1.0 {
            return Err(ConfigError("tau must be at most 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(ConfigError("alpha must be non-negative".into()));
        }
        if !(self.ppo_clip > 0.0 && self.ppo_clip < 1.0) {
            return Err(ConfigError("ppo_clip must lie in (0, 1)".into()));
        }
        let counts = [
            ("hidden", self.hidden[0].min(self.hidden[1])),
            ("batch_size", self.batch_size),
            ("ppo_epochs", self.ppo_epochs),
            ("pq_capacity", self.pq_capacity),
            ("rollout_instances", self.rollout_instances),
            ("eval_every", self.eval_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ConfigError(format!("{name} must be at least 1")));
            }
        }
        self.returns
            .validate()
            .map_err(|e| ConfigError(e.to_string()))
    }
}
