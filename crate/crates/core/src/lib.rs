//! Traffic steering between a co-located LTE macro cell and NR small cells,
//! driven by hierarchical or flat deep Q-learning.

pub mod agents;
pub mod approximator;
pub mod baselines;
pub mod config;
pub mod env;
pub mod harness;
pub mod netsim;
pub mod policy;
pub mod radio;
pub mod traffic;
