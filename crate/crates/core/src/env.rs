//! The steering MDP: observations, threshold-aware action application,
//! QoS ratios, intrinsic/extrinsic rewards and the episode objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{FlowWindow, Network};
use crate::radio::Rat;
use crate::traffic::{QosProfile, TrafficFlow};

/// Upper clip applied to both QoS ratios.
pub const RATIO_CLIP: f64 = 10.0;

/// SINR range (dB) mapped onto [0, 1] for the approximators.
pub const SINR_RANGE_DB: (f64, f64) = (-10.0, 60.0);

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("extrinsic reward needs at least one intrinsic reward")]
    EmptyHistory,
    #[error("goal set must be non-empty, sorted, unique and within (0, 1]")]
    BadGoalSet,
}

/// `(F_t, SINR_r, Q_l)`: traffic type, serving SINR pair, queue occupancy pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringState {
    /// One-hot (or histogram, for the meta level) over (voice, video, gaming).
    pub traffic: [f64; 3],
    /// `(SINR_LTE, SINR_NR)`, dB.
    pub sinr_db: [f64; 2],
    /// `(Q_l(LTE), Q_l(NR))`.
    pub occupancy: [f64; 2],
}

impl SteeringState {
    pub const DIM: usize = 7;

    /// Min-max normalized feature vector.
    pub fn features(&self) -> [f64; Self::DIM] {
        let [l, n] = self.sinr_db.map(normalize_sinr);
        [
            self.traffic[0],
            self.traffic[1],
            self.traffic[2],
            l,
            n,
            self.occupancy[0].clamp(0.0, 1.0),
            self.occupancy[1].clamp(0.0, 1.0),
        ]
    }

    /// Features with the active threshold appended (controller input).
    pub fn with_goal(&self, goal: Goal) -> Vec<f64> {
        let mut v = self.features().to_vec();
        v.push(goal.threshold);
        v
    }
}

pub fn normalize_sinr(db: f64) -> f64 {
    let (lo, hi) = SINR_RANGE_DB;
    ((db - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Queue-occupancy threshold above which admissions are deferred.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Goal {
    pub threshold: f64,
}

impl Goal {
    pub fn new(threshold: f64) -> Self {
        Self { threshold }
    }
}

/// The finite goal set G.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSet(Vec<Goal>);

impl GoalSet {
    pub fn new(thresholds: &[f64]) -> Result<Self, EnvError> {
        let ok = !thresholds.is_empty()
            && thresholds.iter().all(|&t| t > 0.0 && t <= 1.0)
            && thresholds.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(EnvError::BadGoalSet);
        }
        Ok(Self(thresholds.iter().map(|&t| Goal::new(t)).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Goal {
        self.0[i]
    }

    pub fn index_of(&self, g: Goal) -> Option<usize> {
        self.0.iter().position(|x| x.threshold == g.threshold)
    }

    pub fn iter(&self) -> impl Iterator<Item = Goal> + '_ {
        self.0.iter().copied()
    }
}

impl Default for GoalSet {
    fn default() -> Self {
        Self::new(&[0.5, 0.6, 0.7, 0.8, 0.9, 1.0]).expect("valid default goals")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SteerAction {
    ToLte,
    ToNr,
}

impl SteerAction {
    pub const ALL: [SteerAction; 2] = [SteerAction::ToLte, SteerAction::ToNr];

    pub fn index(self) -> usize {
        match self {
            SteerAction::ToLte => 0,
            SteerAction::ToNr => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn rat(self) -> Rat {
        match self {
            SteerAction::ToLte => Rat::Lte,
            SteerAction::ToNr => Rat::Nr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub c1: f64,
    pub c2: f64,
    pub handover_penalty: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { c1: 0.5, c2: 0.5, handover_penalty: 0.25 }
    }
}

/// `D_QoS / D`, clipped to `[0, RATIO_CLIP]`.
pub fn delay_param(delay_ms: f64, profile: &QosProfile) -> f64 {
    if delay_ms <= 0.0 {
        return RATIO_CLIP;
    }
    (profile.delay_budget_ms / delay_ms).clamp(0.0, RATIO_CLIP)
}

/// `T / T_QoS`, clipped to `[0, RATIO_CLIP]`.
pub fn throughput_param(throughput_mbps: f64, profile: &QosProfile) -> f64 {
    (throughput_mbps / profile.min_throughput_mbps).clamp(0.0, RATIO_CLIP)
}

/// `c1·ϖD + c2·ϖT − H·[handover]`.
pub fn intrinsic_reward(delay_ratio: f64, throughput_ratio: f64, handover: bool, w: &RewardWeights) -> f64 {
    let penalty = if handover { w.handover_penalty } else { 0.0 };
    w.c1 * delay_ratio + w.c2 * throughput_ratio - penalty
}

/// Mean of the intrinsic rewards collected over a meta period.
pub fn extrinsic_reward(intrinsic: &[f64]) -> Result<f64, EnvError> {
    if intrinsic.is_empty() {
        return Err(EnvError::EmptyHistory);
    }
    Ok(intrinsic.iter().sum::<f64>() / intrinsic.len() as f64)
}

/// RAT a flow ends up on after the threshold rule.
///
/// A requested RAT whose queue is at or above the threshold is swapped for the
/// other one, unless that one is also at or above it, in which case the flow
/// stays where it is.
pub fn effective_rat(requested: Rat, current: Rat, goal: Goal, occupancy: [f64; 2]) -> Rat {
    if occupancy[requested.index()] < goal.threshold {
        requested
    } else if occupancy[requested.other().index()] < goal.threshold {
        requested.other()
    } else {
        current
    }
}

/// Applies `action` under `goal` to `flow`. Returns whether the RAT changed.
pub fn apply_action(flow: &mut TrafficFlow, action: SteerAction, goal: Goal, occupancy: [f64; 2]) -> bool {
    let before = flow.current_rat;
    flow.current_rat = effective_rat(action.rat(), before, goal, occupancy);
    flow.current_rat != before
}

/// QoS ratios of one measurement window. A window without traffic counts
/// as meeting the delay budget.
pub fn window_ratios(w: &FlowWindow, profile: &QosProfile, tick_s: f64) -> (f64, f64) {
    let d = match w.delay_ms(tick_s) {
        Some(ms) => delay_param(ms, profile),
        None => 1.0,
    };
    (d, throughput_param(w.throughput_mbps(tick_s), profile))
}

/// Per-flow feasibility against the bitrate and latency constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowFeasibility {
    pub flow: usize,
    pub throughput_mbps: f64,
    pub mean_delay_ms: f64,
    /// Measured bitrate ≥ the class requirement.
    pub bitrate_meets_requirement: bool,
    /// Class requirement ≥ measured bitrate (the literal reading).
    pub requirement_covers_bitrate: bool,
    pub latency_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    /// `Σ_φ mean_τ P_φ,τ`.
    pub value: f64,
    pub flows: Vec<FlowFeasibility>,
}

impl ObjectiveReport {
    pub fn feasible_fraction(&self) -> f64 {
        if self.flows.is_empty() {
            return 1.0;
        }
        let ok = self.flows.iter().filter(|f| f.bitrate_meets_requirement && f.latency_ok).count();
        ok as f64 / self.flows.len() as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct FlowTotals {
    reward_sum: f64,
    periods: u64,
    bits: u64,
    ticks: u64,
    delivered: u64,
    delay_sum_ms: f64,
}

/// Accumulates per-flow rewards and traffic for the episode objective.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectiveAccumulator {
    totals: Vec<FlowTotals>,
}

impl ObjectiveAccumulator {
    pub fn new(flows: usize) -> Self {
        Self { totals: vec![FlowTotals::default(); flows] }
    }

    pub fn record(&mut self, flow: usize, reward: f64, window: &FlowWindow) {
        let t = &mut self.totals[flow];
        t.reward_sum += reward;
        t.periods += 1;
        t.bits += window.delivered_bits;
        t.ticks += window.ticks;
        t.delivered += window.delivered;
        t.delay_sum_ms += window.delay_sum_ms;
    }

    pub fn report(&self, profiles: &[QosProfile], tick_s: f64) -> ObjectiveReport {
        let mut value = 0.0;
        let mut flows = Vec::with_capacity(self.totals.len());
        for (i, (t, p)) in self.totals.iter().zip(profiles).enumerate() {
            if t.periods > 0 {
                value += t.reward_sum / t.periods as f64;
            }
            let throughput_mbps = if t.ticks > 0 { t.bits as f64 / (t.ticks as f64 * tick_s) / 1e6 } else { 0.0 };
            let mean_delay_ms = if t.delivered > 0 { t.delay_sum_ms / t.delivered as f64 } else { f64::INFINITY };
            flows.push(FlowFeasibility {
                flow: i,
                throughput_mbps,
                mean_delay_ms,
                bitrate_meets_requirement: throughput_mbps >= p.min_throughput_mbps,
                requirement_covers_bitrate: p.min_throughput_mbps >= throughput_mbps,
                latency_ok: mean_delay_ms <= p.delay_budget_ms,
            });
        }
        ObjectiveReport { value, flows }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Ticks between controller decisions.
    pub ticks_per_decision: u32,
    pub weights: RewardWeights,
    /// Spread decision execution over the ticks of a period.
    pub stagger: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { ticks_per_decision: 10, weights: RewardWeights::default(), stagger: true }
    }
}

/// Steering request for one flow for the coming decision period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: SteerAction,
    pub goal: Goal,
}

/// What happened to every flow over one decision period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodOutcome {
    pub rewards: Vec<f64>,
    pub handovers: Vec<bool>,
    pub windows: Vec<FlowWindow>,
    pub events: Vec<SteerEvent>,
}

impl PeriodOutcome {
    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            return 0.0;
        }
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }
}

/// Per-flow record of one decision, for steering traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteerEvent {
    pub flow: usize,
    pub requested: Rat,
    pub from: Rat,
    pub to: Rat,
    /// Occupancy pair seen at decision time.
    pub occupancy: [f64; 2],
    pub threshold: f64,
}

impl SteerEvent {
    pub fn switched(&self) -> bool {
        self.from != self.to
    }
}

/// A [`Network`] driven at the controller's decision cadence.
#[derive(Debug, Clone)]
pub struct SteeringEnv {
    pub net: Network,
    pub cfg: EnvConfig,
    period: u64,
    objective: ObjectiveAccumulator,
}

impl SteeringEnv {
    pub fn new(net: Network, cfg: EnvConfig) -> Self {
        let n = net.flows.len();
        Self { net, cfg, period: 0, objective: ObjectiveAccumulator::new(n) }
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn num_flows(&self) -> usize {
        self.net.flows.len()
    }

    pub fn flows(&self) -> &[TrafficFlow] {
        &self.net.flows
    }

    pub fn observe(&self, flow: usize) -> SteeringState {
        SteeringState {
            traffic: self.net.flows[flow].profile.traffic_type.one_hot(),
            sinr_db: self.net.sinr_pair_db(flow),
            occupancy: self.net.occupancy_pair(flow),
        }
    }

    pub fn observe_all(&self) -> Vec<SteeringState> {
        (0..self.num_flows()).map(|f| self.observe(f)).collect()
    }

    /// Network-wide state for the meta level: traffic-type histogram, mean
    /// per-flow SINR pair and mean per-RAT queue occupancy.
    pub fn meta_state(&self, flow_states: &[SteeringState]) -> SteeringState {
        let n = flow_states.len().max(1) as f64;
        let mut traffic = [0.0; 3];
        let mut sinr_db = [0.0; 2];
        for s in flow_states {
            for k in 0..3 {
                traffic[k] += s.traffic[k] / n;
            }
            for r in 0..2 {
                sinr_db[r] += s.sinr_db[r] / n;
            }
        }
        let mut occupancy = [0.0; 2];
        for rat in Rat::ALL {
            let qs: Vec<f64> = self
                .net
                .queues()
                .iter()
                .filter(|q| self.net.deployment.stations[q.bs].rat == rat)
                .map(|q| q.occupancy())
                .collect();
            if !qs.is_empty() {
                occupancy[rat.index()] = qs.iter().sum::<f64>() / qs.len() as f64;
            }
        }
        SteeringState { traffic, sinr_db, occupancy }
    }

    fn apply_one(&mut self, flow: usize, d: &Decision) -> SteerEvent {
        let occupancy = self.net.occupancy_pair(flow);
        let from = self.net.flows[flow].current_rat;
        apply_action(&mut self.net.flows[flow], d.action, d.goal, occupancy);
        SteerEvent {
            flow,
            requested: d.action.rat(),
            from,
            to: self.net.flows[flow].current_rat,
            occupancy,
            threshold: d.goal.threshold,
        }
    }

    /// Runs one decision period and scores every flow.
    ///
    /// With `stagger` set, flow `f`'s decision takes effect at tick
    /// `f mod ticks_per_decision` of the period and the threshold rule sees
    /// the queues as they are at that tick; otherwise every decision takes
    /// effect before the first tick.
    pub fn step_period(&mut self, decisions: &[Decision]) -> PeriodOutcome {
        let n = self.num_flows();
        assert_eq!(decisions.len(), n, "one decision per flow");
        let ticks = self.cfg.ticks_per_decision.max(1) as usize;
        let mut events = Vec::with_capacity(n);
        if !self.cfg.stagger {
            for (f, d) in decisions.iter().enumerate() {
                events.push(self.apply_one(f, d));
            }
        }
        for k in 0..ticks {
            if self.cfg.stagger {
                for f in (k..n).step_by(ticks) {
                    events.push(self.apply_one(f, &decisions[f]));
                }
            }
            self.net.step();
        }
        if self.cfg.stagger {
            // Back to flow order.
            events.sort_by_key(|e| e.flow);
        }
        let windows = self.net.take_windows();
        let tick_s = self.net.cfg.tick_s;
        let mut rewards = Vec::with_capacity(n);
        let mut handovers = Vec::with_capacity(n);
        for (f, w) in windows.iter().enumerate() {
            let handover = events[f].switched();
            let (d, t) = window_ratios(w, &self.net.flows[f].profile, tick_s);
            let r = intrinsic_reward(d, t, handover, &self.cfg.weights);
            self.objective.record(f, r, w);
            rewards.push(r);
            handovers.push(handover);
        }
        self.period += 1;
        PeriodOutcome { rewards, handovers, windows, events }
    }

    pub fn objective(&self) -> ObjectiveReport {
        let profiles: Vec<QosProfile> = self.net.flows.iter().map(|f| f.profile).collect();
        self.objective.report(&profiles, self.net.cfg.tick_s)
    }

    /// Empties queues and counters; flows keep their RAT and period count.
    pub fn reset(&mut self) {
        self.net.reset();
        self.objective = ObjectiveAccumulator::new(self.num_flows());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::TrafficType;

    fn voice() -> QosProfile {
        QosProfile::of(TrafficType::Voice)
    }

    #[test]
    fn delay_ratio_cases() {
        assert_eq!(delay_param(100.0, &voice()), 1.0);
        assert_eq!(delay_param(200.0, &voice()), 0.5);
        assert_eq!(delay_param(1.0, &QosProfile::of(TrafficType::Gaming)), 10.0);
        assert_eq!(delay_param(0.0, &voice()), 10.0);
    }

    #[test]
    fn throughput_ratio_cases() {
        let video = QosProfile::of(TrafficType::Video);
        assert_eq!(throughput_param(10.0, &video), 1.0);
        assert_eq!(throughput_param(5.0, &video), 0.5);
        assert!((throughput_param(0.2, &voice()) - 2.0).abs() < 1e-12);
        assert_eq!(throughput_param(1e3, &voice()), 10.0);
    }

    #[test]
    fn intrinsic_reward_cases() {
        let w = RewardWeights::default();
        assert_eq!(intrinsic_reward(1.0, 1.0, false, &w), 1.0);
        assert_eq!(intrinsic_reward(0.5, 2.0, true, &w), 1.0);
        let zero = RewardWeights { c1: 0.0, c2: 0.0, handover_penalty: 0.0 };
        assert_eq!(intrinsic_reward(0.0, 0.0, true, &zero), 0.0);
    }

    #[test]
    fn extrinsic_reward_is_mean() {
        assert_eq!(extrinsic_reward(&[0.0, 1.0, 2.0, 3.0]), Ok(1.5));
        assert!((extrinsic_reward(&[0.7; 9]).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(extrinsic_reward(&[-2.0]), Ok(-2.0));
        assert_eq!(extrinsic_reward(&[]), Err(EnvError::EmptyHistory));
    }

    #[test]
    fn threshold_rule_table() {
        let th = Goal::new(0.8);
        // congested NR defers to LTE
        assert_eq!(effective_rat(Rat::Nr, Rat::Nr, th, [0.1, 0.9]), Rat::Lte);
        // both congested: stay
        assert_eq!(effective_rat(Rat::Nr, Rat::Lte, th, [0.85, 0.9]), Rat::Lte);
        assert_eq!(effective_rat(Rat::Lte, Rat::Nr, th, [0.85, 0.9]), Rat::Nr);
        // below threshold: honour the request
        assert_eq!(effective_rat(Rat::Lte, Rat::Nr, th, [0.79, 0.0]), Rat::Lte);
        // boundary is inclusive
        assert_eq!(effective_rat(Rat::Nr, Rat::Nr, th, [0.0, 0.8]), Rat::Lte);
    }

    #[test]
    fn apply_action_reports_handover() {
        let mut f = crate::traffic::build_flows(&[TrafficType::Video], 5.0, Rat::Nr).unwrap().remove(0);
        assert!(apply_action(&mut f, SteerAction::ToNr, Goal::new(0.8), [0.1, 0.9]));
        assert_eq!(f.current_rat, Rat::Lte);
        assert!(!apply_action(&mut f, SteerAction::ToNr, Goal::new(0.8), [0.9, 0.95]));
        assert!(!apply_action(&mut f, SteerAction::ToLte, Goal::new(0.8), [0.2, 0.95]));
    }

    #[test]
    fn goal_set_validation() {
        assert!(GoalSet::new(&[0.5, 0.5]).is_err());
        assert!(GoalSet::new(&[0.7, 0.5]).is_err());
        assert!(GoalSet::new(&[0.0, 0.5]).is_err());
        assert!(GoalSet::new(&[]).is_err());
        assert_eq!(GoalSet::default().len(), 6);
    }

    #[test]
    fn features_are_normalized() {
        let s = SteeringState { traffic: TrafficType::Video.one_hot(), sinr_db: [100.0, -40.0], occupancy: [0.0, 0.0] };
        assert_eq!(s.traffic, [0.0, 1.0, 0.0]);
        let f = s.features();
        assert!(f.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(s.with_goal(Goal::new(0.7)).len(), SteeringState::DIM + 1);
    }

    #[test]
    fn objective_sums_mean_rewards() {
        let mut acc = ObjectiveAccumulator::new(2);
        let w = FlowWindow { ticks: 10, ..FlowWindow::default() };
        acc.record(0, 1.0, &w);
        acc.record(0, 3.0, &w);
        acc.record(1, 0.5, &w);
        let profiles = [voice(), voice()];
        let r = acc.report(&profiles, 1e-3);
        assert_eq!(r.value, 2.5);
        assert!(!r.flows[0].latency_ok);
    }
}
