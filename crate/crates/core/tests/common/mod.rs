#![allow(dead_code)]

use rat_steer::harness::Scenario;

/// A few UEs and short episodes; seconds per run.
pub fn small_scenario() -> Scenario {
    let mut s = Scenario::default();
    s.ues.count = 12;
    s.ues.load_mbps = 5.0;
    s.training.episodes = 1;
    s.training.periods_per_episode = 120;
    s.training.eval_periods = 80;
    s.steering.meta_period = 10;
    s.learning.batch_size = 8;
    s
}

/// TOML for `small_scenario`, for the binary.
pub const SMALL_TOML: &str = r#"
[ues]
count = 12
load_mbps = 5.0

[steering]
meta_period = 10

[learning]
batch_size = 8

[training]
episodes = 1
periods_per_episode = 120
eval_periods = 80
seeds = 2
"#;
