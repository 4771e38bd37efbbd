//! Simulator and metrics engine for distributed-trust anonymous aggregation of
//! smart-meter readings.
//!
//! Meters split each 15-minute reading into one share per aggregator
//! ([`sharing`]); aggregators sum shares per interval and the supplier adds the
//! column sums and issues period bills ([`aggregation`]). [`adversary`] models
//! active and passive attackers over the aggregator state, [`metrics`] scores
//! an attacker's knowledge with the entropy-based degree of anonymity, and
//! [`game`] runs the load-profile distinguishing game.

pub mod adversary;
pub mod aggregation;
pub mod error;
pub mod game;
pub mod loadgen;
pub mod metrics;
pub mod model;
pub mod ring;
pub mod rng;
pub mod sharing;

pub use error::{Error, Result};
pub use model::{
    anonymity_set_size, node_count, AggregatorId, Interval, MeterId, Reading, SimConfig,
};
pub use ring::Modulus;
pub use sharing::ShareScheme;
