//! The steering-policy trait and the name → constructor registry used by
//! the harness and the `--agent` flag.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{EpsilonSchedule, HrlAgent};
use crate::approximator::{ApproxError, NetConfig};
use crate::baselines::{DqnAgent, HeuristicAgent, HeuristicWeights};
use crate::env::{Decision, EnvError, Goal, GoalSet, PeriodOutcome, SteeringState};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("unknown agent {name:?}; known agents: {known}")]
    Unknown { name: String, known: String },
    #[error("agent {0:?} is already registered")]
    Duplicate(String),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Inputs to one round of decisions.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub states: &'a [SteeringState],
    pub meta_state: SteeringState,
}

/// The result of the last round, handed back for learning.
#[derive(Debug, Clone, Copy)]
pub struct Feedback<'a> {
    pub states: &'a [SteeringState],
    pub decisions: &'a [Decision],
    pub outcome: &'a PeriodOutcome,
    pub next_states: &'a [SteeringState],
    pub next_meta_state: SteeringState,
    /// Last period of the episode.
    pub terminal: bool,
}

/// Summary of one decision period, one row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLog {
    pub epsilon: f64,
    pub threshold: f64,
    /// `(to LTE, to NR)` requests this period.
    pub actions: [u32; 2],
    pub mean_intrinsic: f64,
    pub extrinsic: Option<f64>,
    pub loss: Option<f64>,
    pub meta_loss: Option<f64>,
}

pub trait SteeringPolicy: Send {
    fn name(&self) -> &'static str;

    /// One decision per flow for the coming period.
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Vec<Decision>;

    /// Consumes the outcome of the decisions returned by the last `decide`.
    fn learn(&mut self, fb: &Feedback<'_>) -> Result<StepLog, PolicyError>;

    /// Switches between training (exploration and updates) and greedy evaluation.
    fn set_training(&mut self, training: bool);

    /// Threshold currently enforced, if the policy uses one.
    fn active_goal(&self) -> Option<Goal>;

    /// Whether training episodes change the policy at all.
    fn learns(&self) -> bool {
        true
    }
}

/// Everything a policy constructor may need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    pub seed: u64,
    pub net: NetConfig,
    pub goals: Vec<f64>,
    /// Controller decisions per meta decision.
    pub meta_period: u32,
    pub dqn_threshold: f64,
    pub heuristic: HeuristicWeights,
    pub epsilon: EpsilonSchedule,
    /// Decision periods the controller will train for; sets the ε horizon.
    pub training_periods: u64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            seed: 1,
            net: NetConfig::default(),
            goals: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            meta_period: 100,
            dqn_threshold: 0.8,
            heuristic: HeuristicWeights::default(),
            epsilon: EpsilonSchedule::default(),
            training_periods: 5_000,
        }
    }
}

impl PolicyParams {
    pub fn goal_set(&self) -> GoalSet {
        GoalSet::new(&self.goals).expect("goal set validated with the scenario")
    }
}

pub type PolicyFactory = fn(&PolicyParams) -> Box<dyn SteeringPolicy>;

/// Policies by name.
#[derive(Clone)]
pub struct PolicyRegistry {
    factories: BTreeMap<&'static str, PolicyFactory>,
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    /// `hrl`, `dqn` and `heuristic`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("hrl", |p| Box::new(HrlAgent::new(p)))
            .and_then(|r| r.register("dqn", |p| Box::new(DqnAgent::new(p))))
            .and_then(|r| r.register("heuristic", |p| Box::new(HeuristicAgent::new(p))))
            .expect("builtin names are distinct");
        r
    }

    pub fn register(&mut self, name: &'static str, factory: PolicyFactory) -> Result<&mut Self, PolicyError> {
        if self.factories.contains_key(name) {
            return Err(PolicyError::Duplicate(name.to_string()));
        }
        self.factories.insert(name, factory);
        Ok(self)
    }

    pub fn create(&self, name: &str, params: &PolicyParams) -> Result<Box<dyn SteeringPolicy>, PolicyError> {
        match self.factories.get(name) {
            Some(f) => Ok(f(params)),
            None => Err(PolicyError::Unknown { name: name.to_string(), known: self.names().join(", ") }),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Independent sub-seed for stream `stream` of `base` (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names() {
        let r = PolicyRegistry::builtin();
        assert_eq!(r.names(), vec!["dqn", "heuristic", "hrl"]);
        for name in r.names() {
            assert_eq!(r.create(name, &PolicyParams::default()).unwrap().name(), name);
        }
    }

    #[test]
    fn unknown_agent_lists_known() {
        let err = PolicyRegistry::builtin().create("ppo", &PolicyParams::default()).err().unwrap();
        assert!(err.to_string().contains("hrl"));
    }

    #[test]
    fn duplicate_registration_fails() {
        let mut r = PolicyRegistry::builtin();
        assert!(r.register("dqn", |p| Box::new(DqnAgent::new(p))).is_err());
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
