//! Hierarchical steering agent: a meta-controller that picks the queue
//! threshold on the slow timescale and a controller that admits each flow
//! to a RAT on the fast timescale. Both are ε-greedy DQN learners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{NetConfig, ReplayBuffer, Transition, ValueNet};
use crate::env::{extrinsic_reward, Decision, Goal, GoalSet, SteerAction, SteeringState};
use crate::policy::{derive_seed, DecisionContext, Feedback, PolicyError, PolicyParams, SteeringPolicy, StepLog};

/// Linear ε decay from `start` to `end` over the first `decay_fraction` of
/// training, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.05, decay_fraction: 0.5 }
    }
}

impl EpsilonSchedule {
    pub fn horizon(&self, total_steps: u64) -> u64 {
        (self.decay_fraction * total_steps as f64).round() as u64
    }

    pub fn epsilon_at(&self, step: u64, total_steps: u64) -> f64 {
        let horizon = self.horizon(total_steps);
        if horizon == 0 || step >= horizon {
            return self.end;
        }
        let frac = step as f64 / horizon as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy choice over `values`. Returns the index and whether it came
/// from the exploration branch.
pub fn epsilon_greedy<R: Rng>(values: &[f64], epsilon: f64, rng: &mut R) -> (usize, bool) {
    if rng.gen::<f64>() < epsilon {
        (rng.gen_range(0..values.len()), true)
    } else {
        (argmax(values), false)
    }
}

const STREAM_CTRL_INIT: u64 = 1;
const STREAM_CTRL_ACT: u64 = 2;
const STREAM_META_INIT: u64 = 3;
const STREAM_META_ACT: u64 = 4;

/// Fast-timescale learner over `(state ⊕ threshold) → {LTE, NR}`.
#[derive(Debug, Clone)]
pub struct Controller {
    net: ValueNet,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    cfg: NetConfig,
    schedule: EpsilonSchedule,
    total_steps: u64,
    steps: u64,
    training: bool,
}

impl Controller {
    pub const INPUT_DIM: usize = SteeringState::DIM + 1;

    pub fn new(params: &PolicyParams) -> Self {
        let mut init = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, STREAM_CTRL_INIT));
        Self {
            net: ValueNet::new(Self::INPUT_DIM, SteerAction::ALL.len(), &params.net, &mut init),
            replay: ReplayBuffer::new(params.net.replay_capacity),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(params.seed, STREAM_CTRL_ACT)),
            cfg: params.net,
            schedule: params.epsilon,
            total_steps: params.training_periods,
            steps: 0,
            training: true,
        }
    }

    pub fn net(&self) -> &ValueNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut ValueNet {
        &mut self.net
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn epsilon(&self) -> f64 {
        if self.training {
            self.schedule.epsilon_at(self.steps, self.total_steps)
        } else {
            0.0
        }
    }

    pub fn select_action(&mut self, state: &SteeringState, goal: Goal) -> SteerAction {
        let eps = self.epsilon();
        self.select_action_with(state, goal, eps)
    }

    pub fn select_action_with(&mut self, state: &SteeringState, goal: Goal, epsilon: f64) -> SteerAction {
        let q = self.net.forward(&state.with_goal(goal), false).expect("controller input width is fixed");
        SteerAction::from_index(epsilon_greedy(&q, epsilon, &mut self.rng).0)
    }

    pub fn act(&mut self, states: &[SteeringState], goal: Goal) -> Vec<Decision> {
        let eps = self.epsilon();
        states.iter().map(|s| Decision { action: self.select_action_with(s, goal, eps), goal }).collect()
    }

    /// Stores one transition per flow and takes one TD step. `next_goal` is
    /// the threshold in force for the next period.
    pub fn learn(&mut self, fb: &Feedback<'_>, goal: Goal, next_goal: Goal) -> Result<Option<f64>, PolicyError> {
        if !self.training {
            return Ok(None);
        }
        for (i, s) in fb.states.iter().enumerate() {
            self.replay.push(Transition {
                state: s.with_goal(goal),
                choice: fb.decisions[i].action.index(),
                reward: fb.outcome.rewards[i],
                next_state: fb.next_states[i].with_goal(next_goal),
                terminal: fb.terminal,
            });
        }
        self.steps += 1;
        train_step(&mut self.net, &self.replay, &self.cfg, &mut self.rng)
    }
}

fn train_step(
    net: &mut ValueNet,
    replay: &ReplayBuffer,
    cfg: &NetConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>, PolicyError> {
    if replay.len() < cfg.batch_size {
        return Ok(None);
    }
    let batch = replay.sample(cfg.batch_size, rng);
    let loss = net.td_update(&batch)?;
    if cfg.target_sync_every > 0 && net.updates() % cfg.target_sync_every == 0 {
        net.sync_target();
    }
    Ok(Some(loss))
}

/// Slow-timescale learner over `state → threshold goal`.
#[derive(Debug, Clone)]
pub struct MetaController {
    net: ValueNet,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    cfg: NetConfig,
    goals: GoalSet,
    pub period: u32,
    schedule: EpsilonSchedule,
    total_steps: u64,
    decisions: u64,
    training: bool,
}

impl MetaController {
    pub fn new(params: &PolicyParams) -> Self {
        let goals = params.goal_set();
        let mut init = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, STREAM_META_INIT));
        let period = params.meta_period.max(1);
        Self {
            net: ValueNet::new(SteeringState::DIM, goals.len(), &params.net, &mut init),
            replay: ReplayBuffer::new(params.net.replay_capacity),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(params.seed, STREAM_META_ACT)),
            cfg: params.net,
            goals,
            period,
            schedule: params.epsilon,
            total_steps: params.training_periods / u64::from(period),
            decisions: 0,
            training: true,
        }
    }

    pub fn goals(&self) -> &GoalSet {
        &self.goals
    }

    pub fn net(&self) -> &ValueNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut ValueNet {
        &mut self.net
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn epsilon(&self) -> f64 {
        if self.training {
            self.schedule.epsilon_at(self.decisions, self.total_steps)
        } else {
            0.0
        }
    }

    pub fn select_goal(&mut self, s_meta: &SteeringState) -> (usize, Goal) {
        let eps = self.epsilon();
        self.select_goal_with(s_meta, eps)
    }

    pub fn select_goal_with(&mut self, s_meta: &SteeringState, epsilon: f64) -> (usize, Goal) {
        let q = self.net.forward(&s_meta.features(), false).expect("meta input width is fixed");
        let (i, _) = epsilon_greedy(&q, epsilon, &mut self.rng);
        if self.training {
            self.decisions += 1;
        }
        (i, self.goals.get(i))
    }

    pub fn store(&mut self, s: &SteeringState, goal: usize, r_ex: f64, next: &SteeringState, terminal: bool) {
        self.replay.push(Transition {
            state: s.features().to_vec(),
            choice: goal,
            reward: r_ex,
            next_state: next.features().to_vec(),
            terminal,
        });
    }

    pub fn update(&mut self) -> Result<Option<f64>, PolicyError> {
        if !self.training {
            return Ok(None);
        }
        train_step(&mut self.net, &self.replay, &self.cfg, &mut self.rng)
    }
}

/// Meta-controller plus controller.
#[derive(Debug, Clone)]
pub struct HrlAgent {
    ctrl: Controller,
    meta: MetaController,
    /// When set the meta level is bypassed and this threshold is used throughout.
    frozen: Option<Goal>,
    active: Option<(usize, Goal)>,
    meta_start: Option<SteeringState>,
    history: Vec<f64>,
    periods_in_goal: u32,
    training: bool,
    meta_transitions: u64,
}

impl HrlAgent {
    pub fn new(params: &PolicyParams) -> Self {
        Self {
            ctrl: Controller::new(params),
            meta: MetaController::new(params),
            frozen: None,
            active: None,
            meta_start: None,
            history: Vec::new(),
            periods_in_goal: 0,
            training: true,
            meta_transitions: 0,
        }
    }

    /// An agent whose meta level always emits `goal` and never trains.
    pub fn with_frozen_goal(params: &PolicyParams, goal: Goal) -> Self {
        Self { frozen: Some(goal), ..Self::new(params) }
    }

    pub fn controller(&self) -> &Controller {
        &self.ctrl
    }

    pub fn meta(&self) -> &MetaController {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut MetaController {
        &mut self.meta
    }

    pub fn controller_mut(&mut self) -> &mut Controller {
        &mut self.ctrl
    }

    /// Meta transitions stored so far.
    pub fn meta_transitions(&self) -> u64 {
        self.meta_transitions
    }

    fn pick_goal(&mut self, s_meta: &SteeringState) -> (usize, Goal) {
        match self.frozen {
            Some(g) => (self.meta.goals().index_of(g).unwrap_or(usize::MAX), g),
            None => self.meta.select_goal(s_meta),
        }
    }
}

impl SteeringPolicy for HrlAgent {
    fn name(&self) -> &'static str {
        "hrl"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Vec<Decision> {
        let (_, goal) = match self.active {
            Some(a) => a,
            None => {
                let a = self.pick_goal(&ctx.meta_state);
                self.active = Some(a);
                self.meta_start = Some(ctx.meta_state);
                a
            }
        };
        self.ctrl.act(ctx.states, goal)
    }

    fn learn(&mut self, fb: &Feedback<'_>) -> Result<StepLog, PolicyError> {
        let (goal_idx, goal) = self.active.expect("decide runs before learn");
        let epsilon = self.ctrl.epsilon();
        self.history.extend_from_slice(&fb.outcome.rewards);
        self.periods_in_goal += 1;
        let mut next_goal = goal;
        let mut extrinsic = None;
        if self.periods_in_goal >= self.meta.period {
            let r_ex = extrinsic_reward(&self.history)?;
            extrinsic = Some(r_ex);
            if self.frozen.is_none() && self.training {
                let start = self.meta_start.expect("goal start state recorded");
                self.meta.store(&start, goal_idx, r_ex, &fb.next_meta_state, fb.terminal);
                self.meta_transitions += 1;
            }
            self.history.clear();
            self.periods_in_goal = 0;
            if fb.terminal {
                self.active = None;
            } else {
                let next = self.pick_goal(&fb.next_meta_state);
                next_goal = next.1;
                self.active = Some(next);
                self.meta_start = Some(fb.next_meta_state);
            }
        } else if fb.terminal {
            // A partial meta period at the end of an episode is discarded.
            self.history.clear();
            self.periods_in_goal = 0;
            self.active = None;
        }
        let loss = self.ctrl.learn(fb, goal, next_goal)?;
        let meta_loss = if self.frozen.is_none() { self.meta.update()? } else { None };
        Ok(StepLog {
            epsilon,
            threshold: goal.threshold,
            actions: count_actions(fb.decisions),
            mean_intrinsic: fb.outcome.mean_reward(),
            extrinsic,
            loss,
            meta_loss,
        })
    }

    fn set_training(&mut self, training: bool) {
        self.training = training;
        self.ctrl.set_training(training);
        self.meta.set_training(training);
    }

    fn active_goal(&self) -> Option<Goal> {
        self.active.map(|(_, g)| g)
    }
}

pub(crate) fn count_actions(decisions: &[Decision]) -> [u32; 2] {
    let mut c = [0; 2];
    for d in decisions {
        c[d.action.index()] += 1;
    }
    c
}
