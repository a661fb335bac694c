//! Efficiency-maximizing prediction maps.
//!
//! Under `ALL` each bucket is solved on its own in polynomial time. Under `ONE`
//! the problem is NP-hard (see [`mfas`]), so the exact solver enumerates
//! winner configurations and is meant for small instances.

pub mod all;
pub mod mfas;
pub mod one;
pub(crate) mod ratio_system;

pub use all::{bid_groups, optimal_map_all, AllOptimum, BidGroup};
pub use mfas::{mfas_exact, mfas_to_instance, upsets, Ranking, Tournament};
pub use one::{
    feasible_config, feasible_configurations, optimal_map_one_exact, OneOptimum, WinnerConfiguration,
    DEFAULT_CONFIG_BUDGET,
};
