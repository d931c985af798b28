//! Experiment orchestration: training and evaluation runs, sweeps and
//! steering traces.

pub mod report;
pub mod scenario;
pub mod selfcheck;

use rayon::prelude::*;
use thiserror::Error;

use crate::env::{SteerEvent, SteeringEnv};
use crate::policy::{derive_seed, DecisionContext, Feedback, PolicyError, PolicyRegistry, SteeringPolicy, StepLog};
use crate::radio::Rat;
use crate::traffic::TrafficType;

pub use report::{mean_std, KpiSummary, SweepRow, TraceRow, TrainRow};
pub use scenario::{Scenario, ScenarioError};

const STREAM_TRAIN_TRAFFIC: u64 = 11;
const STREAM_EVAL_TRAFFIC: u64 = 12;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("could not start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeKpi {
    pub traffic: TrafficType,
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub throughput_mbps: f64,
    pub delay_ms: f64,
    pub drop_rate: f64,
}

/// Evaluation-phase KPIs of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiReport {
    pub agent: String,
    pub load_mbps: f64,
    pub seed: u64,
    /// Delivered bits over evaluation time, whole system.
    pub throughput_mbps: f64,
    /// Mean end-to-end delay of delivered packets.
    pub delay_ms: f64,
    pub delay_p50_ms: f64,
    pub delay_p95_ms: f64,
    pub drop_rate: f64,
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Packets still queued when evaluation stopped.
    pub in_queue: u64,
    pub per_type: Vec<TypeKpi>,
    pub objective: f64,
    pub feasible_fraction: f64,
    /// Mean of the link capacity the scheduler had on offer.
    pub capacity_mbps: f64,
    pub eval_ticks: u64,
    pub conservation_violations: u64,
    pub fifo_violations: u64,
}

impl KpiReport {
    /// `generated = delivered + dropped + queued`.
    pub fn conserves_packets(&self) -> bool {
        self.generated == self.delivered + self.dropped + self.in_queue
    }

    pub fn from_env(env: &SteeringEnv, agent: &str, load_mbps: f64, seed: u64) -> Self {
        let net = &env.net;
        let tick_s = net.cfg.tick_s;
        let c = net.counters();
        let total = c.total();
        let ticks = net.tick();
        let secs = ticks as f64 * tick_s;
        let rate = |bits: u64| if secs > 0.0 { bits as f64 / secs / 1e6 } else { 0.0 };
        let ratio = |a: u64, b: u64| if b > 0 { a as f64 / b as f64 } else { 0.0 };
        let mean_delay = |sum: f64, n: u64| if n > 0 { sum / n as f64 } else { 0.0 };
        let per_type = TrafficType::ALL
            .iter()
            .map(|&t| {
                let k = c.of(t);
                TypeKpi {
                    traffic: t,
                    generated: k.generated,
                    delivered: k.delivered,
                    dropped: k.dropped,
                    throughput_mbps: rate(k.delivered_bits),
                    delay_ms: mean_delay(k.delay_sum_ms, k.delivered),
                    drop_rate: ratio(k.dropped, k.generated),
                }
            })
            .collect();
        let objective = env.objective();
        Self {
            agent: agent.to_string(),
            load_mbps,
            seed,
            throughput_mbps: rate(total.delivered_bits),
            delay_ms: mean_delay(total.delay_sum_ms, total.delivered),
            delay_p50_ms: c.delays.quantile(0.5),
            delay_p95_ms: c.delays.quantile(0.95),
            drop_rate: ratio(total.dropped, total.generated),
            generated: total.generated,
            delivered: total.delivered,
            dropped: total.dropped,
            in_queue: net.in_queue(),
            per_type,
            objective: objective.value,
            feasible_fraction: objective.feasible_fraction(),
            capacity_mbps: if secs > 0.0 { c.offered_capacity_bits / secs / 1e6 } else { 0.0 },
            eval_ticks: ticks,
            conservation_violations: net.conservation_violations(),
            fifo_violations: net.fifo_violations(),
        }
    }
}

/// Runs `periods` decision periods of `policy` in `env`, calling `observe`
/// after each one with the period index, the steering events and the log.
pub fn drive<F>(
    env: &mut SteeringEnv,
    policy: &mut dyn SteeringPolicy,
    periods: u64,
    mut observe: F,
) -> Result<(), PolicyError>
where
    F: FnMut(u64, &[SteerEvent], &StepLog),
{
    let mut states = env.observe_all();
    for p in 0..periods {
        let meta_state = env.meta_state(&states);
        let decisions = policy.decide(&DecisionContext { states: &states, meta_state });
        let outcome = env.step_period(&decisions);
        let next = env.observe_all();
        let fb = Feedback {
            states: &states,
            decisions: &decisions,
            outcome: &outcome,
            next_states: &next,
            next_meta_state: env.meta_state(&next),
            terminal: p + 1 == periods,
        };
        let log = policy.learn(&fb)?;
        observe(p, &outcome.events, &log);
        states = next;
    }
    Ok(())
}

/// Training episodes on their own traffic stream; queues are emptied
/// between episodes while the policy's weights carry over.
pub fn train(scenario: &Scenario, policy: &mut dyn SteeringPolicy, seed: u64) -> Result<Vec<TrainRow>, HarnessError> {
    let mut rows = Vec::new();
    if !policy.learns() || scenario.training.episodes == 0 {
        return Ok(rows);
    }
    let mut env = scenario.build_env(derive_seed(seed, STREAM_TRAIN_TRAFFIC))?;
    policy.set_training(true);
    let periods = u64::from(scenario.training.periods_per_episode);
    let mut step = 0u64;
    for episode in 0..scenario.training.episodes {
        env.reset();
        drive(&mut env, policy, periods, |_, _, log| {
            rows.push(TrainRow::new(episode, step, log));
            step += 1;
        })?;
    }
    Ok(rows)
}

/// Greedy evaluation on a fresh traffic stream.
pub fn evaluate(scenario: &Scenario, policy: &mut dyn SteeringPolicy, seed: u64) -> Result<KpiReport, HarnessError> {
    let mut env = scenario.build_env(derive_seed(seed, STREAM_EVAL_TRAFFIC))?;
    policy.set_training(false);
    drive(&mut env, policy, u64::from(scenario.training.eval_periods), |_, _, _| {})?;
    Ok(KpiReport::from_env(&env, policy.name(), scenario.ues.load_mbps, seed))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: KpiReport,
    pub log: Vec<TrainRow>,
}

/// Trains (if the agent learns) and then evaluates one agent for one seed.
pub fn run(scenario: &Scenario, registry: &PolicyRegistry, agent: &str, seed: u64) -> Result<RunOutput, HarnessError> {
    scenario.validate()?;
    let mut policy = registry.create(agent, &scenario.policy_params(seed))?;
    let log = train(scenario, policy.as_mut(), seed)?;
    let report = evaluate(scenario, policy.as_mut(), seed)?;
    Ok(RunOutput { report, log })
}

/// Maps `f` over `items` on `jobs` worker threads, keeping input order.
pub fn par_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>, HarnessError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, HarnessError> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    pool.install(|| items.par_iter().map(&f).collect())
}

pub fn default_seeds(scenario: &Scenario) -> Vec<u64> {
    (1..=u64::from(scenario.training.seeds)).collect()
}

/// Every `(agent, load, seed)` combination, one report each, in that
/// nesting order.
pub fn load_sweep(
    scenario: &Scenario,
    registry: &PolicyRegistry,
    agents: &[String],
    loads: &[f64],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<KpiReport>, HarnessError> {
    for a in agents {
        if !registry.contains(a) {
            return Err(registry.create(a, &scenario.policy_params(0)).err().expect("unknown agent").into());
        }
    }
    let mut tasks = Vec::new();
    for a in agents {
        for &load in loads {
            for &seed in seeds {
                tasks.push((a.clone(), load, seed));
            }
        }
    }
    par_map(&tasks, jobs, |(agent, load, seed)| {
        let mut s = scenario.clone();
        s.ues.load_mbps = *load;
        run(&s, registry, agent, *seed).map(|o| o.report)
    })
}

/// Per `(agent, load)` mean and sample standard deviation.
pub fn summarize(reports: &[KpiReport]) -> Vec<KpiSummary> {
    let mut out: Vec<KpiSummary> = Vec::new();
    for r in reports {
        if out.iter().any(|s| s.agent == r.agent && s.load_mbps == r.load_mbps) {
            continue;
        }
        let group: Vec<&KpiReport> =
            reports.iter().filter(|x| x.agent == r.agent && x.load_mbps == r.load_mbps).collect();
        let col = |f: fn(&KpiReport) -> f64| mean_std(&group.iter().map(|x| f(x)).collect::<Vec<_>>());
        out.push(KpiSummary {
            agent: r.agent.clone(),
            load_mbps: r.load_mbps,
            seeds: group.len(),
            throughput_mbps: col(|x| x.throughput_mbps),
            delay_ms: col(|x| x.delay_ms),
            drop_rate: col(|x| x.drop_rate),
            objective: col(|x| x.objective),
        });
    }
    out
}

/// Result of [`threshold_sweep`]: one aggregate row per `(threshold, load)`
/// and every per-seed run behind them, tagged with its threshold.
#[derive(Debug, Clone)]
pub struct ThresholdSweep {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<(f64, KpiReport)>,
}

/// The DQN baseline at every `(threshold, load)` pair, averaged over seeds.
pub fn threshold_sweep(
    scenario: &Scenario,
    registry: &PolicyRegistry,
    thresholds: &[f64],
    loads: &[f64],
    seeds: &[u64],
    jobs: usize,
) -> Result<ThresholdSweep, HarnessError> {
    for (i, th) in thresholds.iter().enumerate() {
        if !(*th > 0.0 && *th <= 1.0) {
            return Err(ScenarioError::new(format!("thresholds[{i}]"), format!("must lie in (0, 1], got {th}")).into());
        }
    }
    let mut tasks = Vec::new();
    for &load in loads {
        for &th in thresholds {
            for &seed in seeds {
                tasks.push((th, load, seed));
            }
        }
    }
    let reports = par_map(&tasks, jobs, |(th, load, seed)| {
        let mut s = scenario.clone();
        s.ues.load_mbps = *load;
        s.baselines.dqn_threshold = *th;
        run(&s, registry, "dqn", *seed).map(|o| o.report)
    })?;
    let mut rows = Vec::new();
    for (chunk, group) in tasks.chunks(seeds.len().max(1)).zip(reports.chunks(seeds.len().max(1))) {
        let (th, load, _) = chunk[0];
        let col = |f: fn(&KpiReport) -> f64| mean_std(&group.iter().map(f).collect::<Vec<_>>());
        rows.push(SweepRow {
            threshold: th,
            load_mbps: load,
            seeds: group.len(),
            throughput_mbps: col(|x| x.throughput_mbps),
            delay_ms: col(|x| x.delay_ms),
            drop_rate: col(|x| x.drop_rate),
        });
    }
    let runs = tasks.iter().map(|t| t.0).zip(reports).collect();
    Ok(ThresholdSweep { rows, runs })
}

/// Threshold with the highest mean throughput at `load`; ties go to the
/// lower threshold.
pub fn best_threshold(rows: &[SweepRow], load: f64) -> Option<&SweepRow> {
    rows.iter().filter(|r| r.load_mbps == load).fold(None, |best: Option<&SweepRow>, r| match best {
        Some(b) if b.throughput_mbps.0 > r.throughput_mbps.0 => Some(b),
        Some(b) if b.throughput_mbps.0 == r.throughput_mbps.0 && b.threshold <= r.threshold => Some(b),
        _ => Some(r),
    })
}

/// Runs `window` greedy periods of `policy` and records, per period and
/// UE, the RAT in use after the decision, the queue pair it saw, the active
/// threshold, and whether the threshold rule moved the flow to the RAT it
/// did not ask for. A flow that stays put because both queues are over the
/// threshold is not a switch.
pub fn trace_policy(
    env: &mut SteeringEnv,
    policy: &mut dyn SteeringPolicy,
    window: u64,
) -> Result<Vec<TraceRow>, PolicyError> {
    let mut rows = Vec::new();
    let ues: Vec<usize> = env.flows().iter().map(|f| f.ue).collect();
    drive(env, policy, window, |p, events, _| {
        for e in events {
            rows.push(TraceRow {
                step: p,
                ue: ues[e.flow],
                rat: e.to,
                q_lte: e.occupancy[Rat::Lte.index()],
                q_nr: e.occupancy[Rat::Nr.index()],
                threshold: e.threshold,
                switched: e.switched() && e.to != e.requested,
            });
        }
    })?;
    Ok(rows)
}

/// Trains `agent` as in [`run`] and traces `window` evaluation periods.
pub fn steering_trace(
    scenario: &Scenario,
    registry: &PolicyRegistry,
    agent: &str,
    seed: u64,
    window: u64,
) -> Result<Vec<TraceRow>, HarnessError> {
    scenario.validate()?;
    let mut policy = registry.create(agent, &scenario.policy_params(seed))?;
    train(scenario, policy.as_mut(), seed)?;
    let mut env = scenario.build_env(derive_seed(seed, STREAM_EVAL_TRAFFIC))?;
    policy.set_training(false);
    Ok(trace_policy(&mut env, policy.as_mut(), window)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        let mut s = Scenario::default();
        s.ues.count = 6;
        s.ues.load_mbps = 1.0;
        s.training.episodes = 1;
        s.training.periods_per_episode = 20;
        s.training.eval_periods = 20;
        s.steering.meta_period = 5;
        s
    }

    #[test]
    fn zero_load_is_idle() {
        let mut s = small();
        s.ues.load_mbps = 0.0;
        let r = run(&s, &PolicyRegistry::builtin(), "heuristic", 1).unwrap().report;
        assert_eq!(r.generated, 0);
        assert_eq!(r.throughput_mbps, 0.0);
        assert_eq!(r.drop_rate, 0.0);
    }

    #[test]
    fn report_conserves_packets() {
        let s = small();
        for agent in ["hrl", "dqn", "heuristic"] {
            let r = run(&s, &PolicyRegistry::builtin(), agent, 3).unwrap().report;
            assert!(r.generated > 0);
            assert!(r.conserves_packets());
            assert_eq!(r.conservation_violations, 0);
            assert!((0.0..=1.0).contains(&r.drop_rate));
            assert!(r.throughput_mbps <= r.capacity_mbps + 1e-9);
        }
    }

    #[test]
    fn training_log_has_one_row_per_period() {
        let s = small();
        let out = run(&s, &PolicyRegistry::builtin(), "hrl", 1).unwrap();
        assert_eq!(out.log.len(), 20);
        assert_eq!(out.log.last().unwrap().step, 19);
        let h = run(&s, &PolicyRegistry::builtin(), "heuristic", 1).unwrap();
        assert!(h.log.is_empty());
    }

    #[test]
    fn sweep_shape() {
        let s = small();
        let sweep = threshold_sweep(&s, &PolicyRegistry::builtin(), &[0.5, 1.0], &[1.0, 2.0], &[1, 2], 1).unwrap();
        assert_eq!(sweep.runs.len(), 8);
        let rows = sweep.rows;
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1].threshold, 1.0);
        assert_eq!(rows[2].load_mbps, 2.0);
        assert_eq!(rows[0].seeds, 2);
        assert!(threshold_sweep(&s, &PolicyRegistry::builtin(), &[0.0], &[1.0], &[1], 1).is_err());
    }

    #[test]
    fn best_threshold_prefers_lower_on_tie() {
        let row = |th, tp| SweepRow {
            threshold: th,
            load_mbps: 5.0,
            seeds: 1,
            throughput_mbps: (tp, 0.0),
            delay_ms: (0.0, 0.0),
            drop_rate: (0.0, 0.0),
        };
        let rows = [row(0.5, 1.0), row(0.7, 3.0), row(0.8, 3.0), row(1.0, 2.0)];
        assert_eq!(best_threshold(&rows, 5.0).unwrap().threshold, 0.7);
        assert!(best_threshold(&rows, 10.0).is_none());
    }

    #[test]
    fn summary_groups_by_agent_and_load() {
        let s = small();
        let reports =
            load_sweep(&s, &PolicyRegistry::builtin(), &["heuristic".to_string()], &[1.0, 2.0], &[1, 2, 3], 1).unwrap();
        assert_eq!(reports.len(), 6);
        let sum = summarize(&reports);
        assert_eq!(sum.len(), 2);
        assert_eq!(sum[0].seeds, 3);
        let tp: Vec<f64> = reports[..3].iter().map(|r| r.throughput_mbps).collect();
        assert_eq!(sum[0].throughput_mbps, mean_std(&tp));
    }

    #[test]
    fn unknown_agent_in_sweep() {
        let s = small();
        let err = load_sweep(&s, &PolicyRegistry::builtin(), &["nope".into()], &[1.0], &[1], 1).unwrap_err();
        assert!(matches!(err, HarnessError::Policy(PolicyError::Unknown { .. })));
    }
}
