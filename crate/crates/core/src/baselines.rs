//! Comparison policies: a flat DQN that steers under a fixed queue
//! threshold, and a stateless weighted-sum threshold heuristic.

use serde::{Deserialize, Serialize};

use crate::agents::{count_actions, Controller};
use crate::env::{Decision, Goal, SteerAction, SteeringState};
use crate::policy::{DecisionContext, Feedback, PolicyError, PolicyParams, SteeringPolicy, StepLog};
use crate::traffic::{QosProfile, TrafficType};

/// Flat DQN: the HRL controller with the threshold pinned.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    ctrl: Controller,
    goal: Goal,
}

impl DqnAgent {
    pub fn new(params: &PolicyParams) -> Self {
        Self { ctrl: Controller::new(params), goal: Goal::new(params.dqn_threshold) }
    }

    pub fn controller(&self) -> &Controller {
        &self.ctrl
    }

    pub fn controller_mut(&mut self) -> &mut Controller {
        &mut self.ctrl
    }

    /// ε-greedy action for one state under the fixed threshold.
    pub fn dqn_decide(&mut self, state: &SteeringState, epsilon: f64) -> SteerAction {
        self.ctrl.select_action_with(state, self.goal, epsilon)
    }
}

impl SteeringPolicy for DqnAgent {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Vec<Decision> {
        self.ctrl.act(ctx.states, self.goal)
    }

    fn learn(&mut self, fb: &Feedback<'_>) -> Result<StepLog, PolicyError> {
        let epsilon = self.ctrl.epsilon();
        let loss = self.ctrl.learn(fb, self.goal, self.goal)?;
        Ok(StepLog {
            epsilon,
            threshold: self.goal.threshold,
            actions: count_actions(fb.decisions),
            mean_intrinsic: fb.outcome.mean_reward(),
            extrinsic: None,
            loss,
            meta_loss: None,
        })
    }

    fn set_training(&mut self, training: bool) {
        self.ctrl.set_training(training);
    }

    fn active_goal(&self) -> Option<Goal> {
        Some(self.goal)
    }
}

/// Weights of the heuristic's metrics. All metrics are oriented so that a
/// larger value argues for NR, except `service`, where larger means the
/// service is content with LTE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicWeights {
    pub load: f64,
    pub channel: f64,
    pub service: f64,
}

impl Default for HeuristicWeights {
    fn default() -> Self {
        Self { load: 0.4, channel: 0.4, service: 0.2 }
    }
}

/// `Th_t` is the plain mean of the three metrics and `W` their weighted sum;
/// NR is chosen iff `W > Th_t`.
pub fn heuristic_decide(load: f64, channel: f64, service: f64, w: &HeuristicWeights) -> SteerAction {
    let threshold = (load + channel + service) / 3.0;
    let score = w.load * load + w.channel * channel + w.service * service;
    if score > threshold {
        SteerAction::ToNr
    } else {
        SteerAction::ToLte
    }
}

/// Normalized `(load, channel, service)` metrics of a flow.
///
/// * load: `(1 + Q_LTE − Q_NR) / 2`, high when NR is the less loaded RAT.
/// * channel: `(1 + s_NR − s_LTE) / 2` over min-max normalized SINRs.
/// * service: `1 − T_QoS / T_QoS,max`, high for low-rate services.
pub fn heuristic_metrics(state: &SteeringState) -> (f64, f64, f64) {
    let f = state.features();
    let load = ((1.0 + f[5] - f[6]) / 2.0).clamp(0.0, 1.0);
    let channel = ((1.0 + f[4] - f[3]) / 2.0).clamp(0.0, 1.0);
    let max_rate = TrafficType::ALL.iter().map(|t| QosProfile::of(*t).min_throughput_mbps).fold(0.0, f64::max);
    let rate: f64 =
        TrafficType::ALL.iter().zip(state.traffic).map(|(t, w)| w * QosProfile::of(*t).min_throughput_mbps).sum();
    (load, channel, (1.0 - rate / max_rate).clamp(0.0, 1.0))
}

/// Stateless threshold heuristic. Admissions are only deferred when the
/// chosen queue is completely full.
#[derive(Debug, Clone)]
pub struct HeuristicAgent {
    weights: HeuristicWeights,
    goal: Goal,
}

impl HeuristicAgent {
    pub fn new(params: &PolicyParams) -> Self {
        Self { weights: params.heuristic, goal: Goal::new(1.0) }
    }
}

impl SteeringPolicy for HeuristicAgent {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Vec<Decision> {
        ctx.states
            .iter()
            .map(|s| {
                let (load, channel, service) = heuristic_metrics(s);
                Decision { action: heuristic_decide(load, channel, service, &self.weights), goal: self.goal }
            })
            .collect()
    }

    fn learn(&mut self, fb: &Feedback<'_>) -> Result<StepLog, PolicyError> {
        Ok(StepLog {
            epsilon: 0.0,
            threshold: self.goal.threshold,
            actions: count_actions(fb.decisions),
            mean_intrinsic: fb.outcome.mean_reward(),
            ..StepLog::default()
        })
    }

    fn set_training(&mut self, _training: bool) {}

    fn learns(&self) -> bool {
        false
    }

    fn active_goal(&self) -> Option<Goal> {
        Some(self.goal)
    }
}
