//! Deterministic simulator of dynamic fog computing for vehicular networks.

pub mod config;
pub mod error;
pub mod fog;
pub mod mobility;
pub mod model;
pub mod radio;
pub mod rng;
pub mod trace;
pub mod dissemination;
pub mod metrics;
pub mod engine;
