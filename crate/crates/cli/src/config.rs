//! Flat `key = value` run configuration. Every key has a default; unknown
//! keys are rejected. The resolved map is written into every artifact.

use std::collections::BTreeMap;
use std::time::Duration;

use treebranch_core::bnb::{RewardConfig, SolveLimits, SolveOptions};
use treebranch_core::branching::BrancherConfig;
use treebranch_core::mdp::ReturnConfig;
use treebranch_core::milp::GeneratorSpec;
use treebranch_learn::config::TrainConfig;

use crate::CliError;

const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    // instance generator
    ("family", "set_cover"),
    ("rows", "40"),
    ("cols", "60"),
    ("density", "0.2"),
    ("max_cost", "1"),
    ("items", "30"),
    ("knapsacks", "3"),
    ("nodes", "40"),
    ("edge_prob", "0.15"),
    // solver
    ("max_nodes", "5000"),
    ("max_lp_iterations", "50000"),
    ("time_limit", "0"),
    ("per_child_reward", "false"),
    ("gamma", "0.95"),
    ("kappa", "0.8"),
    // heuristics
    ("fsb_epsilon", "1e-6"),
    ("vhb_fsb_prob", "0.05"),
    ("rpb_reliability", "4"),
    // training
    ("transitions", "5000"),
    ("epochs", "30"),
    ("iterations", "200"),
    ("hidden1", "64"),
    ("hidden2", "64"),
    ("actor_lr", "3e-4"),
    ("critic_lr", "1e-3"),
    ("batch_size", "64"),
    ("tau", "0.005"),
    ("alpha", "2.5"),
    ("ppo_clip", "0.2"),
    ("ppo_epochs", "4"),
    ("sil_batches", "4"),
    ("pq_capacity", "3"),
    ("rollout_instances", "16"),
    ("max_grad_norm", "10"),
    ("eval_every", "10"),
    // evaluation
    ("eval_seeds", "0,1,2,3,4"),
    ("val_seeds", "0"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.to_string();
                Ok(())
            }
            None => Err(usage(format!("unknown config key `{key}`"))),
        }
    }

    /// Applies `key=value` text: one pair per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| usage(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies a `key=value` override given on the command line.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| usage(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        &self.values[key]
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Resolved configuration in the same format it is read from.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)
            .parse()
            .map_err(|_| usage(format!("config key `{key}`: cannot parse `{}`", self.get(key))))
    }

    fn list(&self, key: &str) -> Result<Vec<u64>, CliError> {
        let out: Result<Vec<u64>, _> = self
            .get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect();
        match out {
            Ok(v) if !v.is_empty() => Ok(v),
            _ => Err(usage(format!("config key `{key}`: expected a comma-separated list of seeds"))),
        }
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.parse("seed")
    }

    pub fn eval_seeds(&self) -> Result<Vec<u64>, CliError> {
        self.list("eval_seeds")
    }

    pub fn val_seeds(&self) -> Result<Vec<u64>, CliError> {
        self.list("val_seeds")
    }

    pub fn count(&self, key: &str) -> Result<usize, CliError> {
        self.parse(key)
    }

    pub fn generator(&self) -> Result<GeneratorSpec, CliError> {
        let spec = match self.get("family") {
            "set_cover" => GeneratorSpec::set_cover(self.parse("rows")?, self.parse("cols")?, self.parse("density")?, 0)
                .with_max_cost(self.parse("max_cost")?),
            "knapsack" => GeneratorSpec::multi_knapsack(self.parse("items")?, self.parse("knapsacks")?, 0),
            "indep_set" => GeneratorSpec::indep_set(self.parse("nodes")?, self.parse("edge_prob")?, 0),
            other => {
                return Err(usage(format!(
                    "config key `family`: unknown family `{other}` (set_cover, knapsack, indep_set)"
                )))
            }
        };
        treebranch_core::milp::generate(&spec).map_err(|e| usage(format!("generator: {e}")))?;
        Ok(spec)
    }

    pub fn returns(&self) -> Result<ReturnConfig, CliError> {
        let r = ReturnConfig {
            gamma: self.parse("gamma")?,
            kappa: self.parse("kappa")?,
        };
        r.validate().map_err(|e| usage(e.to_string()))?;
        Ok(r)
    }

    pub fn solve_options(&self) -> Result<SolveOptions, CliError> {
        let secs: f64 = self.parse("time_limit")?;
        if !(secs >= 0.0 && secs.is_finite()) {
            return Err(usage("config key `time_limit` must be a non-negative number of seconds".into()));
        }
        let max_nodes: usize = self.parse("max_nodes")?;
        if max_nodes < 1 {
            return Err(usage("config key `max_nodes` must be at least 1".into()));
        }
        Ok(SolveOptions {
            limits: SolveLimits {
                max_nodes,
                max_lp_iterations_per_node: self.parse("max_lp_iterations")?,
                time_limit: (secs > 0.0).then(|| Duration::from_secs_f64(secs)),
            },
            rewards: RewardConfig {
                per_child_reward: self.parse("per_child_reward")?,
            },
            returns: self.returns()?,
            ..SolveOptions::default()
        })
    }

    pub fn brancher(&self) -> Result<BrancherConfig, CliError> {
        let b = BrancherConfig {
            fsb_epsilon: self.parse("fsb_epsilon")?,
            vhb_fsb_prob: self.parse("vhb_fsb_prob")?,
            rpb_reliability: self.parse("rpb_reliability")?,
        };
        b.validate().map_err(|e| usage(e.to_string()))?;
        Ok(b)
    }

    pub fn train(&self) -> Result<TrainConfig, CliError> {
        let t = TrainConfig {
            hidden: [self.parse("hidden1")?, self.parse("hidden2")?],
            actor_lr: self.parse("actor_lr")?,
            critic_lr: self.parse("critic_lr")?,
            batch_size: self.parse("batch_size")?,
            tau: self.parse("tau")?,
            alpha: self.parse("alpha")?,
            returns: self.returns()?,
            ppo_clip: self.parse("ppo_clip")?,
            ppo_epochs: self.parse("ppo_epochs")?,
            sil_batches: self.parse("sil_batches")?,
            pq_capacity: self.parse("pq_capacity")?,
            rollout_instances: self.parse("rollout_instances")?,
            max_grad_norm: self.parse("max_grad_norm")?,
            eval_every: self.parse("eval_every")?,
        };
        t.validate().map_err(|e| usage(e.to_string()))?;
        Ok(t)
    }

    /// Parses every key once so bad values surface before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        self.seed()?;
        self.eval_seeds()?;
        self.val_seeds()?;
        self.generator()?;
        self.solve_options()?;
        self.brancher()?;
        self.train()?;
        for k in ["transitions", "epochs", "iterations"] {
            self.count(k)?;
        }
        Ok(())
    }
}
