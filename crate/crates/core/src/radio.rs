//! Channel model, SINR and Shannon link capacity for every (UE, BS) pair.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Path-loss exponent of the log-distance model.
pub const PATH_LOSS_EXPONENT: f64 = 3.5;

/// Reference distance of the log-distance model, meters.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

/// Thermal noise power spectral density, dBm/Hz.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("carrier frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("base station {id}: {reason}")]
    InvalidBaseStation { id: usize, reason: String },
    #[error("noise power spectral density must be positive, got {0}")]
    NonPositiveNoise(f64),
}

/// Radio access technology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rat {
    Lte,
    Nr,
}

impl Rat {
    pub const ALL: [Rat; 2] = [Rat::Lte, Rat::Nr];

    /// Index into `(LTE, NR)` pairs.
    pub fn index(self) -> usize {
        match self {
            Rat::Lte => 0,
            Rat::Nr => 1,
        }
    }

    pub fn other(self) -> Rat {
        match self {
            Rat::Lte => Rat::Nr,
            Rat::Nr => Rat::Lte,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Rat::Lte => "lte",
            Rat::Nr => "nr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseStation {
    pub id: usize,
    pub rat: Rat,
    pub position: Position,
    pub tx_power_w: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Transmit power per RBG, watts. Length is the RBG count.
    pub rbg_power_w: Vec<f64>,
    pub rbg_bandwidth_hz: f64,
}

impl BaseStation {
    /// Builds a base station that splits its power equally over `num_rbgs`
    /// RBGs of `bandwidth_hz / num_rbgs` each.
    pub fn new(
        id: usize,
        rat: Rat,
        position: Position,
        tx_power_w: f64,
        carrier_hz: f64,
        bandwidth_hz: f64,
        num_rbgs: usize,
    ) -> Result<Self, RadioError> {
        let invalid = |reason: &str| RadioError::InvalidBaseStation { id, reason: reason.to_string() };
        if num_rbgs == 0 {
            return Err(invalid("RBG count must be at least 1"));
        }
        if !(tx_power_w >= 0.0 && tx_power_w.is_finite()) {
            return Err(invalid("transmit power must be finite and non-negative"));
        }
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(invalid("bandwidth must be positive"));
        }
        if !(carrier_hz > 0.0) {
            return Err(RadioError::NonPositiveFrequency(carrier_hz));
        }
        let per_rbg = tx_power_w / num_rbgs as f64;
        Ok(Self {
            id,
            rat,
            position,
            tx_power_w,
            carrier_hz,
            bandwidth_hz,
            rbg_power_w: vec![per_rbg; num_rbgs],
            rbg_bandwidth_hz: bandwidth_hz / num_rbgs as f64,
        })
    }

    pub fn num_rbgs(&self) -> usize {
        self.rbg_power_w.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserEquipment {
    pub id: usize,
    pub position: Position,
    pub serving_lte: usize,
    pub serving_nr: usize,
}

impl UserEquipment {
    pub fn serving(&self, rat: Rat) -> usize {
        match rat {
            Rat::Lte => self.serving_lte,
            Rat::Nr => self.serving_nr,
        }
    }
}

/// Channel state of one (UE, BS) link.
///
/// `alloc[ψ]` is the RBG allocation indicator. For a link to an interfering
/// base station it marks whether that station transmits on RBG ψ.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioLink {
    pub ue: usize,
    pub bs: usize,
    pub gain: Vec<f64>,
    pub alloc: Vec<bool>,
    pub noise_psd_w_per_hz: f64,
}

impl RadioLink {
    /// A link with a flat gain over `num_rbgs` RBGs and no allocation.
    pub fn flat(ue: usize, bs: usize, gain: f64, num_rbgs: usize, noise_psd_w_per_hz: f64) -> Self {
        Self { ue, bs, gain: vec![gain; num_rbgs], alloc: vec![false; num_rbgs], noise_psd_w_per_hz }
    }

    pub fn with_alloc(mut self, alloc: Vec<bool>) -> Self {
        self.alloc = alloc;
        self
    }
}

/// An interfering station together with its link to the victim UE.
#[derive(Debug, Clone, Copy)]
pub struct Interferer<'a> {
    pub bs: &'a BaseStation,
    pub link: &'a RadioLink,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Thermal noise PSD in W/Hz.
pub fn thermal_noise_psd() -> f64 {
    dbm_to_watts(THERMAL_NOISE_DBM_PER_HZ)
}

/// Free-space loss at the reference distance, dB.
pub fn free_space_reference_db(carrier_hz: f64) -> f64 {
    20.0 * (4.0 * PI * REFERENCE_DISTANCE_M * carrier_hz / SPEED_OF_LIGHT).log10()
}

/// Log-distance path loss, dB.
pub fn path_loss_db(distance_m: f64, carrier_hz: f64) -> Result<f64, RadioError> {
    if !(distance_m > 0.0) {
        return Err(RadioError::NonPositiveDistance(distance_m));
    }
    if !(carrier_hz > 0.0) {
        return Err(RadioError::NonPositiveFrequency(carrier_hz));
    }
    Ok(free_space_reference_db(carrier_hz) + 10.0 * PATH_LOSS_EXPONENT * (distance_m / REFERENCE_DISTANCE_M).log10())
}

/// `signal / (noise + interference)`. The scalar core shared by every SINR path.
#[inline]
pub fn sinr_ratio(signal_w: f64, noise_w: f64, interference_w: f64) -> f64 {
    signal_w / (noise_w + interference_w)
}

/// SINR of `link` on one RBG. Interferers with the serving station's id are skipped.
pub fn compute_sinr(link: &RadioLink, rbg: usize, serving: &BaseStation, interferers: &[Interferer<'_>]) -> f64 {
    debug_assert!(rbg < serving.num_rbgs());
    if !link.alloc[rbg] {
        return 0.0;
    }
    let signal = serving.rbg_power_w[rbg] * link.gain[rbg];
    let noise = serving.rbg_bandwidth_hz * link.noise_psd_w_per_hz;
    let interference: f64 = interferers
        .iter()
        .filter(|i| i.bs.id != serving.id)
        .filter(|i| rbg < i.bs.num_rbgs() && i.link.alloc[rbg])
        .map(|i| i.bs.rbg_power_w[rbg] * i.link.gain[rbg])
        .sum();
    sinr_ratio(signal, noise, interference)
}

/// Shannon capacity of `link` summed over its RBGs, bits/s.
pub fn link_capacity(link: &RadioLink, serving: &BaseStation, interferers: &[Interferer<'_>]) -> f64 {
    (0..serving.num_rbgs())
        .filter(|&rbg| link.alloc[rbg])
        .map(|rbg| {
            let sinr = compute_sinr(link, rbg, serving, interferers);
            serving.rbg_bandwidth_hz * (1.0 + sinr).log2()
        })
        .fold(0.0, |acc, c| acc + c)
}

/// One flow's contribution to a link-load check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowDemand {
    pub demand_bps: f64,
    /// Whether the flow is routed over the link.
    pub bound: bool,
}

/// True iff the bound demand fits in `capacity_bps` (boundary inclusive).
pub fn check_link_constraint(flows: &[FlowDemand], capacity_bps: f64) -> bool {
    let load: f64 = flows.iter().filter(|f| f.bound).map(|f| f.demand_bps).sum();
    load <= capacity_bps
}

/// Static radio layout: stations, UEs and the per-(UE, BS) linear gain table.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub stations: Vec<BaseStation>,
    pub ues: Vec<UserEquipment>,
    /// `gains[ue][bs]`, flat over RBGs.
    pub gains: Vec<Vec<f64>>,
    pub noise_psd_w_per_hz: f64,
}

impl Deployment {
    /// Attaches each UE at `positions` to its nearest station of each RAT and
    /// evaluates the gain table. `shadowing_db` draws i.i.d. log-normal
    /// shadowing per link when set.
    pub fn build<R: Rng>(
        stations: Vec<BaseStation>,
        positions: &[Position],
        noise_psd_w_per_hz: f64,
        shadowing_db: Option<f64>,
        rng: &mut R,
    ) -> Result<Self, RadioError> {
        if !(noise_psd_w_per_hz > 0.0) {
            return Err(RadioError::NonPositiveNoise(noise_psd_w_per_hz));
        }
        let nearest = |p: &Position, rat: Rat| {
            stations
                .iter()
                .filter(|b| b.rat == rat)
                .min_by(|a, b| p.distance(&a.position).total_cmp(&p.distance(&b.position)))
                .map(|b| b.id)
        };
        let mut ues = Vec::with_capacity(positions.len());
        for (id, p) in positions.iter().enumerate() {
            let (Some(serving_lte), Some(serving_nr)) = (nearest(p, Rat::Lte), nearest(p, Rat::Nr)) else {
                return Err(RadioError::InvalidBaseStation {
                    id: usize::MAX,
                    reason: "deployment needs at least one LTE and one NR station".into(),
                });
            };
            ues.push(UserEquipment { id, position: *p, serving_lte, serving_nr });
        }
        let shadow = shadowing_db.map(|sigma| Normal::new(0.0, sigma).expect("finite sigma"));
        let mut gains = Vec::with_capacity(ues.len());
        for ue in &ues {
            let mut row = Vec::with_capacity(stations.len());
            for bs in &stations {
                // Clamp to 1 m so a UE dropped on top of a mast stays finite.
                let d = ue.position.distance(&bs.position).max(REFERENCE_DISTANCE_M);
                let mut loss = path_loss_db(d, bs.carrier_hz)?;
                if let Some(n) = &shadow {
                    loss += n.sample(rng);
                }
                row.push(db_to_linear(-loss));
            }
            gains.push(row);
        }
        Ok(Self { stations, ues, gains, noise_psd_w_per_hz })
    }

    pub fn gain(&self, ue: usize, bs: usize) -> f64 {
        self.gains[ue][bs]
    }

    /// Stations of the same RAT other than `bs` (co-channel interferers).
    pub fn co_channel(&self, bs: usize) -> impl Iterator<Item = &BaseStation> + '_ {
        let rat = self.stations[bs].rat;
        self.stations.iter().filter(move |b| b.rat == rat && b.id != bs)
    }

    /// Wideband SINR in dB of `ue` toward `bs` as if it held every RBG, given
    /// which RBGs every station is currently transmitting on.
    pub fn wideband_sinr_db(&self, ue: usize, bs: usize, active: &[Vec<bool>]) -> f64 {
        let serving = &self.stations[bs];
        let noise = serving.rbg_bandwidth_hz * self.noise_psd_w_per_hz;
        let mut acc = 0.0;
        for rbg in 0..serving.num_rbgs() {
            let signal = serving.rbg_power_w[rbg] * self.gains[ue][bs];
            let interference: f64 = self
                .co_channel(bs)
                .filter(|mu| rbg < mu.num_rbgs() && active[mu.id][rbg])
                .map(|mu| mu.rbg_power_w[rbg] * self.gains[ue][mu.id])
                .sum();
            acc += linear_to_db(sinr_ratio(signal, noise, interference));
        }
        acc / serving.num_rbgs() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn bs(id: usize, power: f64, rbgs: usize, bw: f64) -> BaseStation {
        BaseStation::new(id, Rat::Nr, Position::default(), power, 3.5e9, bw, rbgs).unwrap()
    }

    #[test]
    fn reference_loss_at_one_meter() {
        // 20·log10(4π·1·3.5e9 / 299792458) = 20·log10(146.7098) dB.
        let pl = path_loss_db(1.0, 3.5e9).unwrap();
        assert_close(pl, 43.32914, 1e-4);
    }

    #[test]
    fn decade_adds_ten_n() {
        let a = path_loss_db(1.0, 3.5e9).unwrap();
        let b = path_loss_db(10.0, 3.5e9).unwrap();
        assert_close(b - a, 35.0, 1e-12);
    }

    #[test]
    fn lower_carrier_loses_less() {
        assert!(path_loss_db(100.0, 800e6).unwrap() < path_loss_db(100.0, 3.5e9).unwrap());
    }

    #[test]
    fn path_loss_rejects_bad_inputs() {
        assert_eq!(path_loss_db(0.0, 1e9), Err(RadioError::NonPositiveDistance(0.0)));
        assert_eq!(path_loss_db(-3.0, 1e9), Err(RadioError::NonPositiveDistance(-3.0)));
        assert_eq!(path_loss_db(5.0, 0.0), Err(RadioError::NonPositiveFrequency(0.0)));
    }

    #[test]
    fn unallocated_rbg_has_zero_sinr() {
        let s = bs(0, 1.0, 1, 1.0);
        let link = RadioLink::flat(0, 0, 1e-9, 1, 1e-12);
        assert_eq!(compute_sinr(&link, 0, &s, &[]), 0.0);
    }

    #[test]
    fn noise_only_sinr() {
        // ρ = 1 W, g = 1e-9, ω·X0 = 1 Hz · 1e-12 W/Hz
        let s = bs(0, 1.0, 1, 1.0);
        let link = RadioLink::flat(0, 0, 1e-9, 1, 1e-12).with_alloc(vec![true]);
        assert_close(compute_sinr(&link, 0, &s, &[]), 1000.0, 1e-9);
    }

    #[test]
    fn symmetric_interferer_gives_unit_sinr() {
        let s = bs(0, 1.0, 1, 1.0);
        let i = bs(1, 1.0, 1, 1.0);
        let link = RadioLink::flat(0, 0, 1e-6, 1, 1e-30).with_alloc(vec![true]);
        let ilink = RadioLink::flat(0, 1, 1e-6, 1, 1e-30).with_alloc(vec![true]);
        let sinr = compute_sinr(&link, 0, &s, &[Interferer { bs: &i, link: &ilink }]);
        assert_close(sinr, 1.0, 1e-12);
    }

    #[test]
    fn serving_station_is_not_its_own_interferer() {
        let s = bs(0, 1.0, 1, 1.0);
        let link = RadioLink::flat(0, 0, 1e-9, 1, 1e-12).with_alloc(vec![true]);
        let sinr = compute_sinr(&link, 0, &s, &[Interferer { bs: &s, link: &link }]);
        assert_close(sinr, 1000.0, 1e-9);
    }

    #[test]
    fn capacity_of_single_rbg() {
        // ω = 180 kHz, SINR = 3 → 180e3·log2(4)
        let s = bs(0, 3.0, 1, 180e3);
        let link = RadioLink::flat(0, 0, 1.0, 1, 1.0 / 180e3).with_alloc(vec![true]);
        assert_close(link_capacity(&link, &s, &[]), 360e3, 1e-6);
    }

    #[test]
    fn capacity_is_zero_without_allocation() {
        let s = bs(0, 20.0, 20, 20e6);
        let link = RadioLink::flat(0, 0, 1e-9, 20, 1e-20);
        assert_eq!(link_capacity(&link, &s, &[]), 0.0);
    }

    #[test]
    fn zero_power_interferer_is_silent() {
        let s = bs(0, 1.0, 2, 2.0);
        let quiet = bs(1, 0.0, 2, 2.0);
        let link = RadioLink::flat(0, 0, 1e-9, 2, 1e-12).with_alloc(vec![true, true]);
        let ilink = RadioLink::flat(0, 1, 1.0, 2, 1e-12).with_alloc(vec![true, true]);
        let alone = link_capacity(&link, &s, &[]);
        let with = link_capacity(&link, &s, &[Interferer { bs: &quiet, link: &ilink }]);
        assert_eq!(alone, with);
    }

    #[test]
    fn link_constraint_boundaries() {
        assert!(check_link_constraint(&[], 0.0));
        let one = [FlowDemand { demand_bps: 5e6, bound: true }];
        assert!(check_link_constraint(&one, 5e6));
        let over = [FlowDemand { demand_bps: 5e6, bound: true }, FlowDemand { demand_bps: 1e-3, bound: true }];
        assert!(!check_link_constraint(&over, 5e6));
        let unbound = [FlowDemand { demand_bps: 1e9, bound: false }];
        assert!(check_link_constraint(&unbound, 1.0));
    }

    #[test]
    fn station_rejects_zero_rbgs() {
        assert!(BaseStation::new(0, Rat::Lte, Position::default(), 40.0, 800e6, 10e6, 0).is_err());
    }

    #[test]
    fn power_and_bandwidth_split_within_totals() {
        let b = BaseStation::new(0, Rat::Lte, Position::default(), 40.0, 800e6, 10e6, 10).unwrap();
        assert!(b.rbg_power_w.iter().sum::<f64>() <= 40.0 + 1e-12);
        assert!(b.rbg_bandwidth_hz * b.num_rbgs() as f64 <= 10e6 + 1e-6);
    }

    #[test]
    fn ues_attach_to_nearest_station_per_rat() {
        let stations = vec![
            BaseStation::new(0, Rat::Lte, Position::new(0.0, 0.0), 40.0, 800e6, 10e6, 10).unwrap(),
            BaseStation::new(1, Rat::Nr, Position::new(100.0, 0.0), 20.0, 3.5e9, 20e6, 20).unwrap(),
            BaseStation::new(2, Rat::Nr, Position::new(-100.0, 0.0), 20.0, 3.5e9, 20e6, 20).unwrap(),
        ];
        let positions = [Position::new(90.0, 5.0), Position::new(-40.0, 0.0)];
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let d = Deployment::build(stations, &positions, thermal_noise_psd(), None, &mut rng).unwrap();
        assert_eq!(d.ues[0].serving_lte, 0);
        assert_eq!(d.ues[0].serving_nr, 1);
        assert_eq!(d.ues[1].serving_nr, 2);
    }
}
