//! Scenario description and the builders that turn it into a live network.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::EpsilonSchedule;
use crate::approximator::NetConfig;
use crate::baselines::HeuristicWeights;
use crate::env::{EnvConfig, GoalSet, RewardWeights, SteeringEnv};
use crate::netsim::{Network, NetworkConfig};
use crate::policy::{derive_seed, PolicyParams};
use crate::radio::{dbm_to_watts, BaseStation, Deployment, Position, RadioError, Rat};
use crate::traffic::{assign_traffic_mix, build_flows, mix_counts, TrafficError, TrafficType};

/// Invalid scenario field, addressed by its dotted key path.
#[derive(Debug, Error, PartialEq)]
#[error("{path}: {message}")]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

impl ScenarioError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topology {
    pub macro_radius_m: f64,
    pub small_cells: u32,
    /// Distance of every small cell from the macro site.
    pub small_cell_distance_m: f64,
    pub small_cell_radius_m: f64,
    /// Share of UEs dropped inside a small-cell disk rather than anywhere in
    /// the macro disk.
    pub hotspot_fraction: f64,
    /// Seed for UE placement and traffic-class assignment, shared by all runs.
    pub placement_seed: u64,
    /// Log-normal shadowing σ; absent means no shadowing.
    pub shadowing_db: Option<f64>,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            macro_radius_m: 500.0,
            small_cells: 4,
            small_cell_distance_m: 250.0,
            small_cell_radius_m: 100.0,
            hotspot_fraction: 0.0,
            placement_seed: 2024,
            shadowing_db: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub carrier_mhz: f64,
    pub tx_power_w: f64,
    pub bandwidth_mhz: f64,
    pub rbgs: u32,
}

impl CellConfig {
    pub fn lte() -> Self {
        Self { carrier_mhz: 800.0, tx_power_w: 40.0, bandwidth_mhz: 10.0, rbgs: 10 }
    }

    pub fn nr() -> Self {
        Self { carrier_mhz: 3500.0, tx_power_w: 20.0, bandwidth_mhz: 20.0, rbgs: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficMix {
    pub voice: f64,
    pub video: f64,
    pub gaming: f64,
}

impl Default for TrafficMix {
    fn default() -> Self {
        Self { voice: 0.2, video: 0.5, gaming: 0.3 }
    }
}

impl TrafficMix {
    pub fn proportions(&self) -> [(TrafficType, f64); 3] {
        [(TrafficType::Voice, self.voice), (TrafficType::Video, self.video), (TrafficType::Gaming, self.gaming)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UeConfig {
    pub count: u32,
    pub load_mbps: f64,
    pub mix: TrafficMix,
}

impl Default for UeConfig {
    fn default() -> Self {
        Self { count: 60, load_mbps: 10.0, mix: TrafficMix::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Radio {
    pub lte: CellConfig,
    pub nr: CellConfig,
    pub noise_dbm_per_hz: f64,
}

impl Default for Radio {
    fn default() -> Self {
        Self { lte: CellConfig::lte(), nr: CellConfig::nr(), noise_dbm_per_hz: -174.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueueConfig {
    pub capacity_pkts: u32,
    pub tick_ms: f64,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self { capacity_pkts: 500, tick_ms: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteeringConfig {
    pub ticks_per_decision: u32,
    /// Execute each flow's decision at its own tick offset within the period.
    pub stagger: bool,
    pub meta_period: u32,
    pub goals: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub handover_penalty: f64,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        Self {
            ticks_per_decision: env.ticks_per_decision,
            stagger: env.stagger,
            meta_period: 100,
            goals: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            c1: env.weights.c1,
            c2: env.weights.c2,
            handover_penalty: env.weights.handover_penalty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    /// Widths of the two hidden layers.
    pub hidden: [usize; 2],
    pub learning_rate: f64,
    pub discount: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync_every: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        let net = NetConfig::default();
        let eps = EpsilonSchedule::default();
        Self {
            hidden: net.hidden,
            learning_rate: net.learning_rate,
            discount: net.discount,
            replay_capacity: net.replay_capacity,
            batch_size: net.batch_size,
            target_sync_every: net.target_sync_every,
            epsilon_start: eps.start,
            epsilon_end: eps.end,
            epsilon_decay_fraction: eps.decay_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub dqn_threshold: f64,
    pub heuristic_load_weight: f64,
    pub heuristic_channel_weight: f64,
    pub heuristic_service_weight: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        let w = HeuristicWeights::default();
        Self {
            dqn_threshold: 0.8,
            heuristic_load_weight: w.load,
            heuristic_channel_weight: w.channel,
            heuristic_service_weight: w.service,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub episodes: u32,
    pub periods_per_episode: u32,
    pub eval_periods: u32,
    /// Run seeds `1..=seeds` in multi-seed experiments.
    pub seeds: u32,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { episodes: 6, periods_per_episode: 5_000, eval_periods: 2_000, seeds: 5 }
    }
}

/// A complete experiment description. Every physical quantity carries its
/// unit in the key name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub topology: Topology,
    pub ues: UeConfig,
    pub radio: Radio,
    pub queue: QueueConfig,
    pub steering: SteeringConfig,
    pub learning: LearningConfig,
    pub baselines: BaselineConfig,
    pub training: TrainingConfig,
}

fn check(ok: bool, path: &str, message: impl Into<String>) -> Result<(), ScenarioError> {
    if ok {
        Ok(())
    } else {
        Err(ScenarioError::new(path, message))
    }
}

fn positive(v: f64, path: &str) -> Result<(), ScenarioError> {
    check(v.is_finite() && v > 0.0, path, format!("must be a positive number, got {v}"))
}

fn unit(v: f64, path: &str) -> Result<(), ScenarioError> {
    check((0.0..=1.0).contains(&v), path, format!("must lie in [0, 1], got {v}"))
}

fn cell(c: &CellConfig, path: &str) -> Result<(), ScenarioError> {
    positive(c.carrier_mhz, &format!("{path}.carrier_mhz"))?;
    positive(c.tx_power_w, &format!("{path}.tx_power_w"))?;
    positive(c.bandwidth_mhz, &format!("{path}.bandwidth_mhz"))?;
    check(c.rbgs > 0, &format!("{path}.rbgs"), "must be at least 1")
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let t = &self.topology;
        positive(t.macro_radius_m, "topology.macro_radius_m")?;
        check(t.small_cells > 0, "topology.small_cells", "must be at least 1")?;
        check(
            t.small_cell_distance_m.is_finite() && t.small_cell_distance_m >= 0.0,
            "topology.small_cell_distance_m",
            "must be non-negative",
        )?;
        positive(t.small_cell_radius_m, "topology.small_cell_radius_m")?;
        unit(t.hotspot_fraction, "topology.hotspot_fraction")?;
        if let Some(s) = t.shadowing_db {
            check(s.is_finite() && s >= 0.0, "topology.shadowing_db", "must be non-negative")?;
        }

        let u = &self.ues;
        check(u.count > 0, "ues.count", "must be at least 1")?;
        check(
            u.load_mbps.is_finite() && u.load_mbps >= 0.0,
            "ues.load_mbps",
            format!("must be non-negative, got {}", u.load_mbps),
        )?;
        for (t, p) in u.mix.proportions() {
            unit(p, &format!("ues.mix.{}", t.as_str()))?;
        }
        let sum: f64 = u.mix.proportions().iter().map(|(_, p)| p).sum();
        check((sum - 1.0).abs() <= 1e-9, "ues.mix", format!("proportions must sum to 1, got {sum}"))?;

        cell(&self.radio.lte, "radio.lte")?;
        cell(&self.radio.nr, "radio.nr")?;
        check(self.radio.noise_dbm_per_hz.is_finite(), "radio.noise_dbm_per_hz", "must be finite")?;

        check(self.queue.capacity_pkts > 0, "queue.capacity_pkts", "must be at least 1")?;
        positive(self.queue.tick_ms, "queue.tick_ms")?;

        let s = &self.steering;
        check(s.ticks_per_decision > 0, "steering.ticks_per_decision", "must be at least 1")?;
        check(s.meta_period > 0, "steering.meta_period", "must be at least 1")?;
        check(!s.goals.is_empty(), "steering.goals", "must not be empty")?;
        for (i, g) in s.goals.iter().enumerate() {
            check(*g > 0.0 && *g <= 1.0, &format!("steering.goals[{i}]"), format!("must lie in (0, 1], got {g}"))?;
        }
        for (v, path) in
            [(s.c1, "steering.c1"), (s.c2, "steering.c2"), (s.handover_penalty, "steering.handover_penalty")]
        {
            check(v.is_finite() && v >= 0.0, path, "must be non-negative")?;
        }

        let l = &self.learning;
        check(l.hidden.iter().all(|h| *h > 0), "learning.hidden", "layer widths must be positive")?;
        positive(l.learning_rate, "learning.learning_rate")?;
        check((0.0..1.0).contains(&l.discount), "learning.discount", "must lie in [0, 1)")?;
        check(l.batch_size > 0, "learning.batch_size", "must be at least 1")?;
        check(l.replay_capacity >= l.batch_size, "learning.replay_capacity", "must hold at least one batch")?;
        check(l.target_sync_every > 0, "learning.target_sync_every", "must be at least 1")?;
        unit(l.epsilon_start, "learning.epsilon_start")?;
        unit(l.epsilon_end, "learning.epsilon_end")?;
        unit(l.epsilon_decay_fraction, "learning.epsilon_decay_fraction")?;

        let b = &self.baselines;
        check(b.dqn_threshold > 0.0 && b.dqn_threshold <= 1.0, "baselines.dqn_threshold", "must lie in (0, 1]")?;
        for (v, path) in [
            (b.heuristic_load_weight, "baselines.heuristic_load_weight"),
            (b.heuristic_channel_weight, "baselines.heuristic_channel_weight"),
            (b.heuristic_service_weight, "baselines.heuristic_service_weight"),
        ] {
            check(v.is_finite() && v >= 0.0, path, "must be non-negative")?;
        }

        check(self.training.eval_periods > 0, "training.eval_periods", "must be at least 1")?;
        check(self.training.periods_per_episode > 0, "training.periods_per_episode", "must be at least 1")?;
        check(self.training.seeds > 0, "training.seeds", "must be at least 1")?;
        Ok(())
    }

    pub fn tick_s(&self) -> f64 {
        self.queue.tick_ms * 1e-3
    }

    pub fn training_periods(&self) -> u64 {
        u64::from(self.training.episodes) * u64::from(self.training.periods_per_episode)
    }

    /// Policy constructor inputs for run seed `seed`.
    pub fn policy_params(&self, seed: u64) -> PolicyParams {
        let l = &self.learning;
        let b = &self.baselines;
        PolicyParams {
            seed: derive_seed(seed, 100),
            net: NetConfig {
                hidden: l.hidden,
                learning_rate: l.learning_rate,
                discount: l.discount,
                replay_capacity: l.replay_capacity,
                batch_size: l.batch_size,
                target_sync_every: l.target_sync_every,
            },
            goals: self.steering.goals.clone(),
            meta_period: self.steering.meta_period,
            dqn_threshold: b.dqn_threshold,
            heuristic: HeuristicWeights {
                load: b.heuristic_load_weight,
                channel: b.heuristic_channel_weight,
                service: b.heuristic_service_weight,
            },
            epsilon: EpsilonSchedule {
                start: l.epsilon_start,
                end: l.epsilon_end,
                decay_fraction: l.epsilon_decay_fraction,
            },
            training_periods: self.training_periods(),
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            ticks_per_decision: self.steering.ticks_per_decision,
            weights: RewardWeights {
                c1: self.steering.c1,
                c2: self.steering.c2,
                handover_penalty: self.steering.handover_penalty,
            },
            stagger: self.steering.stagger,
        }
    }

    pub fn goal_set(&self) -> Result<GoalSet, ScenarioError> {
        GoalSet::new(&self.steering.goals).map_err(|e| ScenarioError::new("steering.goals", e.to_string()))
    }

    /// Station 0 is the macro eNB at the origin; stations `1..` are the
    /// gNBs on a ring around it.
    pub fn stations(&self) -> Result<Vec<BaseStation>, ScenarioError> {
        let t = &self.topology;
        let mk = |id: usize, rat: Rat, pos: Position, c: &CellConfig, path: &str| {
            BaseStation::new(id, rat, pos, c.tx_power_w, c.carrier_mhz * 1e6, c.bandwidth_mhz * 1e6, c.rbgs as usize)
                .map_err(|e: RadioError| ScenarioError::new(path, e.to_string()))
        };
        let mut out = vec![mk(0, Rat::Lte, Position::new(0.0, 0.0), &self.radio.lte, "radio.lte")?];
        for k in 0..t.small_cells {
            out.push(mk(1 + k as usize, Rat::Nr, self.small_cell_center(k), &self.radio.nr, "radio.nr")?);
        }
        Ok(out)
    }

    fn small_cell_center(&self, k: u32) -> Position {
        let t = &self.topology;
        let angle = 2.0 * PI * f64::from(k) / f64::from(t.small_cells);
        Position::new(t.small_cell_distance_m * angle.cos(), t.small_cell_distance_m * angle.sin())
    }

    /// UE positions drawn from the placement seed: uniform over the macro
    /// disk, except a `hotspot_fraction` share spread round-robin over the
    /// small-cell disks.
    pub fn ue_positions(&self) -> Vec<Position> {
        let t = &self.topology;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(t.placement_seed, 1));
        let n = self.ues.count as usize;
        let hot = (t.hotspot_fraction * n as f64).round() as usize;
        let disk = |rng: &mut ChaCha8Rng, c: Position, r: f64| {
            let rho = r * rng.gen::<f64>().sqrt();
            let phi = 2.0 * PI * rng.gen::<f64>();
            Position::new(c.x + rho * phi.cos(), c.y + rho * phi.sin())
        };
        (0..n)
            .map(|i| {
                if i < hot {
                    let k = (i as u32) % t.small_cells;
                    disk(&mut rng, self.small_cell_center(k), t.small_cell_radius_m)
                } else {
                    disk(&mut rng, Position::new(0.0, 0.0), t.macro_radius_m)
                }
            })
            .collect()
    }

    pub fn deployment(&self) -> Result<Deployment, ScenarioError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.topology.placement_seed, 2));
        let noise = dbm_to_watts(self.radio.noise_dbm_per_hz);
        Deployment::build(self.stations()?, &self.ue_positions(), noise, self.topology.shadowing_db, &mut rng)
            .map_err(|e| ScenarioError::new("radio", e.to_string()))
    }

    /// Traffic class of every UE, in UE order.
    pub fn traffic_types(&self) -> Result<Vec<TrafficType>, ScenarioError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.topology.placement_seed, 3));
        assign_traffic_mix(self.ues.count as usize, &self.ues.mix.proportions(), &mut rng)
            .map_err(|e: TrafficError| ScenarioError::new("ues.mix", e.to_string()))
    }

    /// `(voice, video, gaming)` UE counts.
    pub fn class_counts(&self) -> Result<Vec<(TrafficType, usize)>, ScenarioError> {
        mix_counts(self.ues.count as usize, &self.ues.mix.proportions())
            .map_err(|e| ScenarioError::new("ues.mix", e.to_string()))
    }

    /// A fresh environment whose arrival process is seeded with `traffic_seed`.
    pub fn build_env(&self, traffic_seed: u64) -> Result<SteeringEnv, ScenarioError> {
        self.validate()?;
        let flows = build_flows(&self.traffic_types()?, self.ues.load_mbps, Rat::Lte)
            .map_err(|e| ScenarioError::new("ues.load_mbps", e.to_string()))?;
        let net_cfg = NetworkConfig { tick_s: self.tick_s(), queue_capacity_pkts: self.queue.capacity_pkts as usize };
        let net = Network::new(self.deployment()?, flows, net_cfg, traffic_seed);
        Ok(SteeringEnv::new(net, self.env_config()))
    }
}
