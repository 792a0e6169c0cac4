//! Orchestration and simulation of self-organizing teams.

pub mod affinity;
pub mod gateway;
pub mod metrics;
pub mod seed;
pub mod session;
pub mod sim;
