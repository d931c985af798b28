//! Quick invariant suite behind the `selfcheck` subcommand.

use crate::policy::PolicyRegistry;
use crate::radio::{compute_sinr, link_capacity, BaseStation, Interferer, Position, RadioLink, Rat};

use super::{report::write_kpi_csv, run, trace_policy, HarnessError, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> Check {
    Check { name, passed, detail: detail.into() }
}

/// Shrinks `base` to a few seconds of simulated traffic under pressure.
pub fn quick_scenario(base: &Scenario) -> Scenario {
    let mut s = base.clone();
    s.ues.count = s.ues.count.min(12);
    s.training.episodes = 1;
    s.training.periods_per_episode = 200;
    s.training.eval_periods = 200;
    s.steering.meta_period = s.steering.meta_period.min(20);
    s
}

/// Runs every check; the caller decides what a failure means.
pub fn selfcheck(base: &Scenario) -> Result<Vec<Check>, HarnessError> {
    let s = quick_scenario(base);
    let registry = PolicyRegistry::builtin();
    let mut out = Vec::new();

    let bs = BaseStation::new(0, Rat::Nr, Position::new(0.0, 0.0), 20.0, 3.5e9, 20e6, 20)
        .map_err(|e| super::ScenarioError::new("radio", e.to_string()))?;
    let link = RadioLink::flat(0, 0, 1e-10, 20, 4e-21).with_alloc(vec![true; 20]);
    let interferer = BaseStation::new(1, Rat::Nr, Position::new(1.0, 0.0), 0.0, 3.5e9, 20e6, 20)
        .map_err(|e| super::ScenarioError::new("radio", e.to_string()))?;
    let ilink = RadioLink::flat(0, 1, 1e-9, 20, 4e-21).with_alloc(vec![true; 20]);
    let with = link_capacity(&link, &bs, &[Interferer { bs: &interferer, link: &ilink }]);
    let without = link_capacity(&link, &bs, &[]);
    let sinr = compute_sinr(&link, 0, &bs, &[]);
    out.push(check(
        "zero-power interferer is silent",
        with == without && with > 0.0 && sinr > 0.0,
        format!("{with} vs {without} bit/s"),
    ));

    let mut csv = Vec::new();
    for agent in registry.names() {
        let a = run(&s, &registry, agent, 1)?.report;
        let b = run(&s, &registry, agent, 1)?.report;
        out.push(check(
            "packet conservation",
            a.conserves_packets() && a.conservation_violations == 0,
            format!(
                "{agent}: generated {} delivered {} dropped {} queued {}",
                a.generated, a.delivered, a.dropped, a.in_queue
            ),
        ));
        out.push(check("fifo order", a.fifo_violations == 0, format!("{agent}: {} violations", a.fifo_violations)));
        out.push(check("drop rate bounds", (0.0..=1.0).contains(&a.drop_rate), format!("{agent}: {}", a.drop_rate)));
        out.push(check(
            "throughput within capacity",
            a.throughput_mbps <= a.capacity_mbps + 1e-9,
            format!("{agent}: {} <= {} Mbit/s", a.throughput_mbps, a.capacity_mbps),
        ));
        out.push(check("determinism", a == b, format!("{agent}: repeated run identical")));
        csv.push(a);
    }
    let mut bytes = Vec::new();
    write_kpi_csv(&mut bytes, &csv).expect("writing to memory");
    out.push(check(
        "kpi csv rows",
        bytes.iter().filter(|&&c| c == b'\n').count() == csv.len() + 1,
        "header plus one row per agent",
    ));

    let mut env = s.build_env(9)?;
    let mut policy = registry.create("dqn", &s.policy_params(1))?;
    policy.set_training(false);
    let mut occupancy_ok = true;
    let trace = trace_policy(&mut env, policy.as_mut(), 100)?;
    for q in env.net.queues() {
        occupancy_ok &= (0.0..=1.0).contains(&q.occupancy());
    }
    let steered_ok = trace.iter().filter(|r| r.switched).all(|r| {
        let (src, dst) = match r.rat {
            Rat::Lte => (r.q_nr, r.q_lte),
            Rat::Nr => (r.q_lte, r.q_nr),
        };
        src >= r.threshold && dst < r.threshold
    });
    out.push(check("occupancy bounds", occupancy_ok, "all queues within [0, 1]"));
    out.push(check(
        "steering events follow the threshold",
        steered_ok,
        format!("{} steered of {} decisions", trace.iter().filter(|r| r.switched).count(), trace.len()),
    ));
    Ok(out)
}
