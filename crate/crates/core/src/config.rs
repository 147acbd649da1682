//! Simulation parameters and their validation.

use std::fmt;
use std::str::FromStr;

use crate::error::{ConfigErrors, ConfigViolation};
use crate::model::{mph_to_mps, RoadBounds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    Urban,
    Highway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolKind {
    Dfcv,
    StaticFog,
    CloudOnly,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] =
        [ProtocolKind::Dfcv, ProtocolKind::StaticFog, ProtocolKind::CloudOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Dfcv => "dfcv",
            ProtocolKind::StaticFog => "static-fog",
            ProtocolKind::CloudOnly => "cloud-only",
        }
    }
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Urban => "urban",
            Scenario::Highway => "highway",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dfcv" => Ok(ProtocolKind::Dfcv),
            "static-fog" | "static_fog" => Ok(ProtocolKind::StaticFog),
            "cloud-only" | "cloud_only" => Ok(ProtocolKind::CloudOnly),
            other => Err(format!("unknown protocol `{other}` (dfcv|static-fog|cloud-only)")),
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "urban" => Ok(Scenario::Urban),
            "highway" => Ok(Scenario::Highway),
            other => Err(format!("unknown scenario `{other}` (urban|highway)")),
        }
    }
}

/// All tunables of a run. Speeds are given in mph and converted on use.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub road_length_m: f64,
    pub lane_count: u32,
    pub vehicle_count: u32,
    pub speed_min_mph: f64,
    pub speed_max_mph: f64,
    pub transmission_range_m: f64,
    pub message_size_bytes: u32,
    pub data_rate_bps: f64,
    /// Maximum member separation tolerated before a fog splits.
    pub d_min_m: f64,
    pub th_cap: f64,
    pub slot_duration_s: f64,
    pub handshake_delay_s: f64,
    pub cloud_rtt_s: f64,
    pub tick_s: f64,
    pub sim_duration_s: f64,
    pub seed: u64,
    pub scenario: Scenario,
    pub protocol: ProtocolKind,
    /// Messages per vehicle per second.
    pub message_generation_rate: f64,
    pub recipients_per_message: u32,
    pub message_ttl_s: f64,
    /// Delivery attempts per (message, recipient) before giving up.
    pub max_attempts: u32,
    pub resource_pool_units: u64,
    /// Split/merge evaluation for the dfcv protocol.
    pub orchestration: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            road_length_m: 1000.0,
            lane_count: 4,
            vehicle_count: 40,
            speed_min_mph: 30.0,
            speed_max_mph: 65.0,
            transmission_range_m: 300.0,
            message_size_bytes: 256,
            data_rate_bps: 2_000_000.0,
            d_min_m: 300.0,
            th_cap: 0.8,
            slot_duration_s: 0.001,
            handshake_delay_s: 0.002,
            cloud_rtt_s: 0.05,
            tick_s: 0.1,
            sim_duration_s: 300.0,
            seed: 1,
            scenario: Scenario::Urban,
            protocol: ProtocolKind::Dfcv,
            message_generation_rate: 0.1,
            recipients_per_message: 1,
            message_ttl_s: 10.0,
            max_attempts: 3,
            resource_pool_units: 100,
            orchestration: true,
        }
    }
}

impl SimConfig {
    pub fn speed_band_mps(&self) -> (f64, f64) {
        (mph_to_mps(self.speed_min_mph), mph_to_mps(self.speed_max_mph))
    }

    pub fn road_bounds(&self) -> RoadBounds {
        let (min, max) = self.speed_band_mps();
        RoadBounds {
            length_m: self.road_length_m,
            lane_count: self.lane_count,
            min_speed_mps: min,
            max_speed_mps: max,
        }
    }
}

/// Returns the configuration unchanged when every invariant holds, or the
/// full list of violations otherwise.
pub fn validate_config(config: SimConfig) -> Result<SimConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let mut check = |ok: bool, field: &'static str, value: String, rule: &'static str| {
        if !ok {
            errors.push(ConfigViolation { field, value, rule });
        }
    };
    let positive = |v: f64| v.is_finite() && v > 0.0;
    let non_negative = |v: f64| v.is_finite() && v >= 0.0;
    let c = &config;

    check(positive(c.road_length_m), "road_length_m", c.road_length_m.to_string(), "> 0");
    check(c.lane_count >= 1, "lane_count", c.lane_count.to_string(), "≥ 1");
    check(c.vehicle_count >= 2, "vehicle_count", c.vehicle_count.to_string(), "vehicle_count ≥ 2");
    check(positive(c.speed_min_mph), "speed_min_mph", c.speed_min_mph.to_string(), "> 0");
    check(
        positive(c.speed_max_mph) && c.speed_max_mph >= c.speed_min_mph,
        "speed_max_mph",
        c.speed_max_mph.to_string(),
        "> 0 and ≥ speed_min_mph",
    );
    check(
        positive(c.transmission_range_m),
        "transmission_range_m",
        c.transmission_range_m.to_string(),
        "> 0",
    );
    check(c.message_size_bytes > 0, "message_size_bytes", c.message_size_bytes.to_string(), "> 0");
    check(positive(c.data_rate_bps), "data_rate_bps", c.data_rate_bps.to_string(), "> 0");
    check(positive(c.d_min_m), "d_min_m", c.d_min_m.to_string(), "> 0");
    check(
        c.th_cap > 0.0 && c.th_cap <= 1.0,
        "th_cap",
        c.th_cap.to_string(),
        "th_cap ∈ (0,1]",
    );
    check(positive(c.slot_duration_s), "slot_duration_s", c.slot_duration_s.to_string(), "> 0");
    check(
        non_negative(c.handshake_delay_s),
        "handshake_delay_s",
        c.handshake_delay_s.to_string(),
        "≥ 0",
    );
    check(non_negative(c.cloud_rtt_s), "cloud_rtt_s", c.cloud_rtt_s.to_string(), "≥ 0");
    check(positive(c.tick_s), "tick_s", c.tick_s.to_string(), "> 0");
    check(non_negative(c.sim_duration_s), "sim_duration_s", c.sim_duration_s.to_string(), "≥ 0");
    check(
        non_negative(c.message_generation_rate),
        "message_generation_rate",
        c.message_generation_rate.to_string(),
        "≥ 0",
    );
    check(
        c.recipients_per_message >= 1 && c.recipients_per_message < c.vehicle_count.max(2),
        "recipients_per_message",
        c.recipients_per_message.to_string(),
        "in [1, vehicle_count)",
    );
    check(positive(c.message_ttl_s), "message_ttl_s", c.message_ttl_s.to_string(), "> 0");
    check(c.max_attempts >= 1, "max_attempts", c.max_attempts.to_string(), "≥ 1");
    check(
        c.resource_pool_units > 0,
        "resource_pool_units",
        c.resource_pool_units.to_string(),
        "> 0",
    );

    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigErrors(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let config = SimConfig::default();
        assert_eq!(validate_config(config.clone()), Ok(config));
    }

    #[test]
    fn vehicle_count_boundary() {
        let config = SimConfig { vehicle_count: 0, ..SimConfig::default() };
        let errs = validate_config(config).unwrap_err();
        assert_eq!(errs.0.len(), 1);
        assert_eq!(errs.0[0].field, "vehicle_count");
        assert_eq!(errs.0[0].rule, "vehicle_count ≥ 2");
        assert_eq!(errs.0[0].value, "0");
    }

    #[test]
    fn th_cap_boundary() {
        let errs = validate_config(SimConfig { th_cap: 1.5, ..SimConfig::default() }).unwrap_err();
        assert_eq!(errs.0[0].rule, "th_cap ∈ (0,1]");
        assert!(validate_config(SimConfig { th_cap: 1.0, ..SimConfig::default() }).is_ok());
        assert!(validate_config(SimConfig { th_cap: 0.0, ..SimConfig::default() }).is_err());
    }

    #[test]
    fn reports_every_violation() {
        let config = SimConfig {
            vehicle_count: 1,
            th_cap: -0.1,
            road_length_m: 0.0,
            data_rate_bps: f64::NAN,
            ..SimConfig::default()
        };
        let errs = validate_config(config).unwrap_err();
        let fields: Vec<_> = errs.0.iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["road_length_m", "vehicle_count", "data_rate_bps", "th_cap"]);
        assert!(errs.to_string().contains("th_cap = -0.1"));
    }

    #[test]
    fn protocol_names_round_trip() {
        for p in ProtocolKind::ALL {
            assert_eq!(p.as_str().parse::<ProtocolKind>(), Ok(p));
        }
        assert!("ndn".parse::<ProtocolKind>().is_err());
    }
}
