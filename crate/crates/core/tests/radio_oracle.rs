//! Link capacity against a from-scratch re-evaluation, plus monotonicity.

use proptest::prelude::*;
use rat_steer::radio::{
    check_link_constraint, link_capacity, BaseStation, FlowDemand, Interferer, Position, RadioLink, Rat,
};

#[derive(Debug, Clone)]
struct Instance {
    rbgs: usize,
    powers: Vec<f64>,
    bandwidth_hz: f64,
    noise_psd: f64,
    /// `gains[b][ψ]` toward the victim UE; station 0 serves it.
    gains: Vec<Vec<f64>>,
    /// `alloc[b][ψ]`.
    alloc: Vec<Vec<bool>>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=4, 1usize..=8).prop_flat_map(|(stations, rbgs)| {
        (
            Just(rbgs),
            prop::collection::vec(0.0f64..50.0, stations),
            prop::sample::select(vec![1.4e6, 5e6, 10e6, 20e6]),
            -180.0f64..-160.0,
            prop::collection::vec(prop::collection::vec(-14.0f64..-6.0, rbgs), stations),
            prop::collection::vec(prop::collection::vec(any::<bool>(), rbgs), stations),
        )
            .prop_map(|(rbgs, powers, bandwidth_hz, noise_dbm, log_gains, alloc)| Instance {
                rbgs,
                powers,
                bandwidth_hz,
                noise_psd: 10f64.powf((noise_dbm - 30.0) / 10.0),
                gains: log_gains.into_iter().map(|r| r.into_iter().map(|e| 10f64.powf(e)).collect()).collect(),
                alloc,
            })
    })
}

impl Instance {
    fn stations(&self) -> Vec<BaseStation> {
        self.powers
            .iter()
            .enumerate()
            .map(|(id, &p)| {
                BaseStation::new(id, Rat::Nr, Position::new(id as f64, 0.0), p, 3.5e9, self.bandwidth_hz, self.rbgs)
                    .unwrap()
            })
            .collect()
    }

    fn links(&self) -> Vec<RadioLink> {
        (0..self.powers.len())
            .map(|b| RadioLink {
                ue: 0,
                bs: b,
                gain: self.gains[b].clone(),
                alloc: self.alloc[b].clone(),
                noise_psd_w_per_hz: self.noise_psd,
            })
            .collect()
    }

    fn capacity(&self) -> f64 {
        let stations = self.stations();
        let links = self.links();
        let interferers: Vec<Interferer<'_>> =
            (1..stations.len()).map(|b| Interferer { bs: &stations[b], link: &links[b] }).collect();
        link_capacity(&links[0], &stations[0], &interferers)
    }

    /// Direct per-RBG sum written from the formula alone.
    fn oracle(&self) -> f64 {
        let w = self.bandwidth_hz / self.rbgs as f64;
        let mut total = 0.0;
        for psi in 0..self.rbgs {
            if !self.alloc[0][psi] {
                continue;
            }
            let signal = self.powers[0] / self.rbgs as f64 * self.gains[0][psi];
            let mut interference = 0.0;
            for mu in 1..self.powers.len() {
                if self.alloc[mu][psi] {
                    interference += self.powers[mu] / self.rbgs as f64 * self.gains[mu][psi];
                }
            }
            let sinr = signal / (w * self.noise_psd + interference);
            total += w * (1.0 + sinr).ln() / std::f64::consts::LN_2;
        }
        total
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()) || a == b
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn capacity_matches_oracle(inst in instance()) {
        let got = inst.capacity();
        let want = inst.oracle();
        prop_assert!(rel_close(got, want, 1e-9), "{got} vs {want}");
    }

    #[test]
    fn stronger_serving_gain_never_hurts(inst in instance(), rbg in 0usize..8, factor in 1.0f64..100.0) {
        let mut better = inst.clone();
        let psi = rbg % inst.rbgs;
        better.gains[0][psi] *= factor;
        prop_assert!(better.capacity() >= inst.capacity());
    }

    #[test]
    fn extra_interferer_never_helps(inst in instance(), power in 0.0f64..50.0, log_gain in -14.0f64..-6.0) {
        let mut worse = inst.clone();
        worse.powers.push(power);
        worse.gains.push(vec![10f64.powf(log_gain); inst.rbgs]);
        worse.alloc.push(vec![true; inst.rbgs]);
        prop_assert!(worse.capacity() <= inst.capacity());
    }

    #[test]
    fn constraint_is_a_sum_comparison(demands in prop::collection::vec((0.0f64..1e7, any::<bool>()), 0..10), cap in 0.0f64..5e7) {
        let flows: Vec<FlowDemand> = demands.iter().map(|&(d, b)| FlowDemand { demand_bps: d, bound: b }).collect();
        let load: f64 = demands.iter().filter(|(_, b)| *b).map(|(d, _)| d).sum();
        prop_assert_eq!(check_link_constraint(&flows, cap), load <= cap);
        prop_assert!(check_link_constraint(&flows, load));
    }
}

#[test]
fn no_allocation_means_no_capacity() {
    let inst = Instance {
        rbgs: 4,
        powers: vec![20.0, 20.0],
        bandwidth_hz: 20e6,
        noise_psd: 4e-21,
        gains: vec![vec![1e-9; 4]; 2],
        alloc: vec![vec![false; 4], vec![true; 4]],
    };
    assert_eq!(inst.capacity(), 0.0);
    assert_eq!(inst.oracle(), 0.0);
}
