//! Traffic classes, per-UE flow assignment and Poisson packet arrivals.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::Rat;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("traffic mix proportions sum to {0}, expected 1")]
    MixSum(f64),
    #[error("traffic mix proportion for {0:?} is negative or not finite")]
    BadProportion(TrafficType),
    #[error("offered load must be finite and non-negative, got {0} Mbps")]
    BadLoad(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficType {
    Voice,
    Video,
    Gaming,
}

impl TrafficType {
    /// One-hot order used in state vectors.
    pub const ALL: [TrafficType; 3] = [TrafficType::Voice, TrafficType::Video, TrafficType::Gaming];

    pub fn index(self) -> usize {
        match self {
            TrafficType::Voice => 0,
            TrafficType::Video => 1,
            TrafficType::Gaming => 2,
        }
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    /// Rank used to break largest-remainder ties: video, gaming, voice.
    fn tie_rank(self) -> usize {
        match self {
            TrafficType::Video => 0,
            TrafficType::Gaming => 1,
            TrafficType::Voice => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficType::Voice => "voice",
            TrafficType::Video => "video",
            TrafficType::Gaming => "gaming",
        }
    }
}

/// QoS targets of a traffic class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosProfile {
    pub traffic_type: TrafficType,
    pub packet_size_bytes: u32,
    /// Minimum throughput, Mbps.
    pub min_throughput_mbps: f64,
    /// Delay budget, ms.
    pub delay_budget_ms: f64,
}

impl QosProfile {
    pub fn of(traffic_type: TrafficType) -> Self {
        let (packet_size_bytes, min_throughput_mbps, delay_budget_ms) = match traffic_type {
            TrafficType::Voice => (30, 0.1, 100.0),
            TrafficType::Video => (250, 10.0, 80.0),
            TrafficType::Gaming => (120, 5.0, 40.0),
        };
        Self { traffic_type, packet_size_bytes, min_throughput_mbps, delay_budget_ms }
    }

    pub fn packet_bits(&self) -> u64 {
        u64::from(self.packet_size_bytes) * 8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficFlow {
    pub id: usize,
    pub ue: usize,
    pub profile: QosProfile,
    pub offered_load_mbps: f64,
    pub current_rat: Rat,
}

impl TrafficFlow {
    /// Capacity demand δ of the flow, bits/s.
    pub fn demand_bps(&self) -> f64 {
        self.offered_load_mbps * 1e6
    }

    /// Mean packets per tick of `step_s` seconds.
    pub fn mean_packets_per_step(&self, step_s: f64) -> f64 {
        self.offered_load_mbps * 1e6 * step_s / self.profile.packet_bits() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub flow: usize,
    pub size_bytes: u32,
    pub arrival_tick: u64,
    /// Global arrival sequence number; increases with arrival order.
    pub seq: u64,
    /// Tick in which the first bit went on air.
    pub service_start: Option<u64>,
    pub depart_tick: Option<u64>,
}

impl Packet {
    pub fn new(flow: usize, size_bytes: u32, arrival_tick: u64, seq: u64) -> Self {
        Self { flow, size_bytes, arrival_tick, seq, service_start: None, depart_tick: None }
    }

    pub fn bits(&self) -> u64 {
        u64::from(self.size_bytes) * 8
    }
}

/// Realized per-type UE counts for `num_ues` by the largest-remainder rule.
pub fn mix_counts(
    num_ues: usize,
    proportions: &[(TrafficType, f64)],
) -> Result<Vec<(TrafficType, usize)>, TrafficError> {
    for &(t, p) in proportions {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(TrafficError::BadProportion(t));
        }
    }
    let total: f64 = proportions.iter().map(|&(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(TrafficError::MixSum(total));
    }
    let quotas: Vec<(TrafficType, f64)> = proportions.iter().map(|&(t, p)| (t, p * num_ues as f64)).collect();
    let mut counts: Vec<(TrafficType, usize)> = quotas.iter().map(|&(t, q)| (t, q.floor() as usize)).collect();
    let assigned: usize = counts.iter().map(|&(_, c)| c).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a].1 - quotas[a].1.floor();
        let rb = quotas[b].1 - quotas[b].1.floor();
        // Remainders closer than rounding noise count as ties.
        if (ra - rb).abs() > 1e-9 {
            rb.total_cmp(&ra)
        } else {
            quotas[a].0.tie_rank().cmp(&quotas[b].0.tie_rank())
        }
    });
    for &i in order.iter().take(num_ues.saturating_sub(assigned)) {
        counts[i].1 += 1;
    }
    Ok(counts)
}

/// Traffic type of each UE: largest-remainder counts, shuffled over UEs.
pub fn assign_traffic_mix<R: Rng>(
    num_ues: usize,
    proportions: &[(TrafficType, f64)],
    rng: &mut R,
) -> Result<Vec<TrafficType>, TrafficError> {
    let counts = mix_counts(num_ues, proportions)?;
    let mut types: Vec<TrafficType> = counts.iter().flat_map(|&(t, c)| std::iter::repeat(t).take(c)).collect();
    types.shuffle(rng);
    Ok(types)
}

/// Builds one flow per UE with the given types and per-user load.
pub fn build_flows(
    types: &[TrafficType],
    offered_load_mbps: f64,
    initial_rat: Rat,
) -> Result<Vec<TrafficFlow>, TrafficError> {
    if !(offered_load_mbps >= 0.0 && offered_load_mbps.is_finite()) {
        return Err(TrafficError::BadLoad(offered_load_mbps));
    }
    Ok(types
        .iter()
        .enumerate()
        .map(|(i, &t)| TrafficFlow {
            id: i,
            ue: i,
            profile: QosProfile::of(t),
            offered_load_mbps,
            current_rat: initial_rat,
        })
        .collect())
}

/// Poisson arrival process for one flow at a fixed tick length.
#[derive(Debug, Clone)]
pub struct ArrivalProcess {
    dist: Option<Poisson<f64>>,
}

impl ArrivalProcess {
    pub fn new(flow: &TrafficFlow, step_s: f64) -> Self {
        let mean = flow.mean_packets_per_step(step_s);
        Self { dist: (mean > 0.0).then(|| Poisson::new(mean).expect("positive finite mean")) }
    }

    pub fn count<R: Rng>(&self, rng: &mut R) -> u64 {
        match &self.dist {
            Some(d) => d.sample(rng) as u64,
            None => 0,
        }
    }
}

/// Packets offered by `flow` in one tick. Sequence numbers start at `next_seq`.
pub fn generate_arrivals<R: Rng>(
    flow: &TrafficFlow,
    step_s: f64,
    tick: u64,
    next_seq: &mut u64,
    rng: &mut R,
) -> Vec<Packet> {
    let n = ArrivalProcess::new(flow, step_s).count(rng);
    (0..n)
        .map(|_| {
            let p = Packet::new(flow.id, flow.profile.packet_size_bytes, tick, *next_seq);
            *next_seq += 1;
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flow(t: TrafficType, load: f64) -> TrafficFlow {
        build_flows(&[t], load, Rat::Nr).unwrap().remove(0)
    }

    fn count_of(types: &[TrafficType], t: TrafficType) -> usize {
        types.iter().filter(|&&x| x == t).count()
    }

    #[test]
    fn qos_table() {
        let v = QosProfile::of(TrafficType::Voice);
        assert_eq!((v.packet_size_bytes, v.min_throughput_mbps, v.delay_budget_ms), (30, 0.1, 100.0));
        let v = QosProfile::of(TrafficType::Video);
        assert_eq!((v.packet_size_bytes, v.min_throughput_mbps, v.delay_budget_ms), (250, 10.0, 80.0));
        let g = QosProfile::of(TrafficType::Gaming);
        assert_eq!((g.packet_size_bytes, g.min_throughput_mbps, g.delay_budget_ms), (120, 5.0, 40.0));
    }

    #[test]
    fn default_mix_for_sixty_ues() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mix = [(TrafficType::Video, 0.5), (TrafficType::Gaming, 0.3), (TrafficType::Voice, 0.2)];
        let types = assign_traffic_mix(60, &mix, &mut rng).unwrap();
        assert_eq!(count_of(&types, TrafficType::Video), 30);
        assert_eq!(count_of(&types, TrafficType::Gaming), 18);
        assert_eq!(count_of(&types, TrafficType::Voice), 12);
    }

    #[test]
    fn single_video_ue() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let types = assign_traffic_mix(1, &[(TrafficType::Video, 1.0)], &mut rng).unwrap();
        assert_eq!(types, vec![TrafficType::Video]);
    }

    #[test]
    fn thirds_split_by_largest_remainder() {
        let third = 1.0 / 3.0;
        let mix = [(TrafficType::Video, third), (TrafficType::Gaming, third), (TrafficType::Voice, third)];
        let counts = mix_counts(10, &mix).unwrap();
        assert_eq!(counts, vec![(TrafficType::Video, 4), (TrafficType::Gaming, 3), (TrafficType::Voice, 3)]);
        // Listing order must not matter.
        let rev: Vec<_> = mix.iter().rev().copied().collect();
        let counts = mix_counts(10, &rev).unwrap();
        assert!(counts.contains(&(TrafficType::Video, 4)));
    }

    #[test]
    fn mix_must_sum_to_one() {
        let mix = [(TrafficType::Video, 0.5), (TrafficType::Gaming, 0.4)];
        assert!(matches!(mix_counts(60, &mix), Err(TrafficError::MixSum(_))));
    }

    #[test]
    fn assignment_is_seed_deterministic() {
        let mix = [(TrafficType::Video, 0.5), (TrafficType::Gaming, 0.3), (TrafficType::Voice, 0.2)];
        let a = assign_traffic_mix(60, &mix, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = assign_traffic_mix(60, &mix, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_load_never_arrives() {
        let f = flow(TrafficType::Video, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seq = 0;
        for t in 0..1000 {
            assert!(generate_arrivals(&f, 1e-3, t, &mut seq, &mut rng).is_empty());
        }
    }

    #[test]
    fn video_mean_packets_per_tick() {
        let f = flow(TrafficType::Video, 10.0);
        assert!((f.mean_packets_per_step(1e-3) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_rate_matches_offered_load() {
        let f = flow(TrafficType::Video, 5.0);
        let proc_ = ArrivalProcess::new(&f, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let steps = 100_000u64;
        let pkts: u64 = (0..steps).map(|_| proc_.count(&mut rng)).sum();
        let bps = (pkts * f.profile.packet_bits()) as f64 / (steps as f64 * 1e-3);
        assert!((bps / 5e6 - 1.0).abs() < 0.01, "{bps}");
    }

    #[test]
    fn arrivals_are_reproducible() {
        let f = flow(TrafficType::Gaming, 10.0);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seq = 0;
            (0..200).flat_map(|t| generate_arrivals(&f, 1e-3, t, &mut seq, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
    }
}
