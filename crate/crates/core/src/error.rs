use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::{BaseStationId, FogId, MessageId, RsuId, VehicleId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{vehicle} position x={x} is off the road")]
    OffRoad { vehicle: VehicleId, x: f64 },
    #[error("{vehicle} lane {lane} exceeds the configured lane count")]
    BadLane { vehicle: VehicleId, lane: u32 },
    #[error("{vehicle} speed {speed} m/s is outside the configured band")]
    SpeedOutOfBand { vehicle: VehicleId, speed: f64 },
    #[error("{0} has a non-positive range")]
    NonPositiveRange(RsuId),
    #[error("{rsu} references missing or inconsistent base station {bs}")]
    UnknownBaseStation { rsu: RsuId, bs: BaseStationId },
    #[error("{bs} coverage {coverage} m does not exceed its RSU range {rsu_range} m")]
    CoverageTooSmall { bs: BaseStationId, coverage: f64, rsu_range: f64 },
    #[error("identifiers must be dense, found {0} out of place")]
    SparseId(String),
    #[error("{0} has no recipients")]
    NoRecipients(MessageId),
    #[error("{message} lists its sender {sender} as a recipient")]
    SelfAddressed { message: MessageId, sender: VehicleId },
    #[error("{0} has an empty payload")]
    EmptyPayload(MessageId),
    #[error("{vehicle} is not a recipient of {message}")]
    NotARecipient { message: MessageId, vehicle: VehicleId },
    #[error("{message} delivered at {at}, before it was created")]
    DeliveredBeforeCreation { message: MessageId, at: f64 },
}

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigViolation {
    pub field: &'static str,
    pub value: String,
    pub rule: &'static str,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}: expected {}", self.field, self.value, self.rule)
    }
}

/// Every violation found in a configuration, not just the first.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigErrors(pub Vec<ConfigViolation>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: ")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("trace header must be `time_s,vehicle_id,x_m,y_m,speed_mps,lane`, found `{0}`")]
    BadHeader(String),
    #[error("malformed trace row at line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("vehicle {vehicle} has non-increasing timestamp {time} at line {line}")]
    NonMonotonic { vehicle: u64, time: f64, line: u64 },
    #[error("vehicle {vehicle} out of road bounds at line {line}")]
    OutOfBounds { vehicle: u64, line: u64 },
    #[error("no samples")]
    Empty,
    #[error("unknown trace vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("time {t} outside the sample span [{start}, {end}] of {vehicle}")]
    OutOfSpan { vehicle: VehicleId, t: f64, start: f64, end: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FogError {
    #[error("region around the base station holds no vehicles")]
    UndefinedRegion,
    #[error("fog holds {members} vehicles but its region only {region}")]
    MembersExceedRegion { members: usize, region: usize },
    #[error("unknown fog {0}")]
    UnknownFog(FogId),
    #[error("fog {fog} requests {requested} units but only {available} remain")]
    OverAllocation { fog: FogId, requested: u64, available: u64 },
    #[error("fog {fog} releases {requested} units but holds {held}")]
    OverRelease { fog: FogId, requested: u64, held: u64 },
    #[error("fog {fog} still carries undelivered messages {pending:?}")]
    PendingMessages { fog: FogId, pending: Vec<MessageId> },
    #[error("cannot merge fogs {0:?}: need at least two distinct live fogs")]
    DegenerateMerge(Vec<FogId>),
    #[error("cannot merge fogs under different base stations")]
    MixedBaseStations,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("k={k} exceeds N={n}")]
    KExceedsN { k: u64, n: u64 },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("trace holds {trace} vehicles but the configuration asks for {config}")]
    VehicleCountMismatch { trace: usize, config: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invariant violated at t={time}s: {detail}")]
    Invariant { time: f64, detail: String },
}
