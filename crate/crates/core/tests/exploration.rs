//! ε-greedy frequencies against binomial and multinomial bounds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rat_steer::agents::{argmax, epsilon_greedy, Controller};
use rat_steer::approximator::Mlp;
use rat_steer::env::{Goal, SteerAction, SteeringState};
use rat_steer::policy::PolicyParams;

const DRAWS: usize = 10_000;

fn within_3_sigma(count: usize, n: usize, p: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - mean).abs() <= 3.0 * sd
}

#[test]
fn non_greedy_frequency_is_binomial() {
    // Six goals with a unique maximum at index 3.
    let q = [0.1, 0.4, -0.2, 0.9, 0.3, 0.0];
    let k = q.len() as f64;
    for (i, eps) in [0.1, 0.5, 1.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(77 + i as u64);
        let draws: Vec<(usize, bool)> = (0..DRAWS).map(|_| epsilon_greedy(&q, eps, &mut rng)).collect();
        let explored = draws.iter().filter(|d| d.1).count();
        assert!(within_3_sigma(explored, DRAWS, eps), "ε = {eps}: explored {explored} of {DRAWS}");
        let non_greedy = draws.iter().filter(|d| d.0 != 3).count();
        // Exploration can land on the greedy index too.
        let p = eps * (k - 1.0) / k;
        assert!(within_3_sigma(non_greedy, DRAWS, p), "ε = {eps}: {non_greedy} of {DRAWS}, expected p = {p}");
    }
}

#[test]
fn full_exploration_is_uniform() {
    let q = [0.1, 0.4, -0.2, 0.9, 0.3, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 6];
    for _ in 0..DRAWS {
        counts[epsilon_greedy(&q, 1.0, &mut rng).0] += 1;
    }
    for c in counts {
        assert!(within_3_sigma(c, DRAWS, 1.0 / 6.0), "{counts:?}");
    }
}

#[test]
fn zero_epsilon_is_argmax_with_lowest_index_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tied = [0.5, 2.0, 2.0, 1.0];
    for _ in 0..1000 {
        assert_eq!(epsilon_greedy(&tied, 0.0, &mut rng), (1, false));
    }
    assert_eq!(argmax(&[3.0, 3.0]), 0);
    assert_eq!(argmax(&[f64::NEG_INFINITY, -1.0]), 1);
}

fn state() -> SteeringState {
    SteeringState { traffic: [0.0, 1.0, 0.0], sinr_db: [10.0, 5.0], occupancy: [0.2, 0.3] }
}

/// A controller whose Q(NR) − Q(LTE) is `threshold − 0.75` for video flows.
fn biased_controller() -> Controller {
    let mut ctrl = Controller::new(&PolicyParams::default());
    let d = Controller::INPUT_DIM;
    let mut w = vec![0.0; 2 * d];
    w[d + d - 1] = 1.0;
    w[1] = 0.75;
    *ctrl.net_mut().online_mut() = Mlp::linear(d, 2, w);
    ctrl
}

#[test]
fn controller_explores_evenly() {
    let mut ctrl = biased_controller();
    let nr = (0..DRAWS).filter(|_| ctrl.select_action_with(&state(), Goal::new(0.5), 1.0) == SteerAction::ToNr).count();
    assert!(within_3_sigma(nr, DRAWS, 0.5), "{nr}");
}

#[test]
fn goal_encoding_flips_the_greedy_action() {
    let mut ctrl = biased_controller();
    assert_eq!(ctrl.select_action_with(&state(), Goal::new(0.5), 0.0), SteerAction::ToLte);
    assert_eq!(ctrl.select_action_with(&state(), Goal::new(1.0), 0.0), SteerAction::ToNr);
}
