//! Flat JSON configuration files.
//!
//! Every key mirrors a [`SimConfig`] field; absent keys keep their defaults
//! and unknown keys are rejected.

use std::fs;
use std::path::Path;

use dfcv_core::config::{validate_config, SimConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub road_length_m: Option<f64>,
    pub lane_count: Option<u32>,
    pub vehicle_count: Option<u32>,
    pub speed_min_mph: Option<f64>,
    pub speed_max_mph: Option<f64>,
    pub transmission_range_m: Option<f64>,
    pub message_size_bytes: Option<u32>,
    pub data_rate_bps: Option<f64>,
    pub d_min_m: Option<f64>,
    pub th_cap: Option<f64>,
    pub slot_duration_s: Option<f64>,
    pub handshake_delay_s: Option<f64>,
    pub cloud_rtt_s: Option<f64>,
    pub tick_s: Option<f64>,
    pub sim_duration_s: Option<f64>,
    pub seed: Option<u64>,
    pub scenario: Option<String>,
    pub protocol: Option<String>,
    pub message_generation_rate: Option<f64>,
    pub recipients_per_message: Option<u32>,
    pub message_ttl_s: Option<f64>,
    pub max_attempts: Option<u32>,
    pub resource_pool_units: Option<u64>,
    pub orchestration: Option<bool>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies the file over the defaults. `d_min_m` follows the
    /// transmission range unless set explicitly.
    pub fn into_config(self) -> Result<SimConfig, CliError> {
        let mut c = SimConfig::default();
        macro_rules! apply {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { c.$field = v; } )* };
        }
        apply!(
            road_length_m, lane_count, vehicle_count, speed_min_mph, speed_max_mph,
            transmission_range_m, message_size_bytes, data_rate_bps, th_cap, slot_duration_s,
            handshake_delay_s, cloud_rtt_s, tick_s, sim_duration_s, seed, message_generation_rate,
            recipients_per_message, message_ttl_s, max_attempts, resource_pool_units, orchestration
        );
        c.d_min_m = self.d_min_m.unwrap_or(c.transmission_range_m);
        if let Some(s) = &self.scenario {
            c.scenario = s.parse().map_err(CliError::Config)?;
        }
        if let Some(p) = &self.protocol {
            c.protocol = p.parse().map_err(CliError::Config)?;
        }
        validate_config(c).map_err(|e| CliError::Config(e.to_string()))
    }
}
