//! Abstract wireless layer: unit-disk reachability, per-hop latency and
//! slotted collision detection.
//!
//! Two transmissions collide at a receiver when both reach it and their
//! slot intervals overlap. There is no capture effect: every overlapping
//! in-range transmission is lost at that receiver.

use crate::config::SimConfig;
use crate::model::{distance, MessageId, NodeRef, Point};

/// Propagation plus processing latency of one vehicle-to-infrastructure hop.
pub const V2I_LATENCY_S: f64 = 0.0005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkKind {
    /// Over-the-air hop between a vehicle and an RSU, or vehicle to vehicle.
    V2i,
    /// Wired hop between an RSU and its base station, or between base stations.
    Backhaul,
    /// Detour through the cloud layer.
    Cloud,
}

impl LinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::V2i => "v2i",
            LinkKind::Backhaul => "backhaul",
            LinkKind::Cloud => "cloud",
        }
    }
}

/// Boundary-inclusive unit-disk rule.
pub fn in_range(a: Point, b: Point, range: f64) -> bool {
    debug_assert!(range > 0.0);
    distance(a, b) <= range
}

pub fn transmission_time(size_bytes: u64, data_rate_bps: f64) -> f64 {
    assert!(size_bytes > 0 && data_rate_bps > 0.0, "size and data rate must be positive");
    size_bytes as f64 * 8.0 / data_rate_bps
}

/// Fixed latency components of each link kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkLatencies {
    pub v2i_s: f64,
    pub backhaul_s: f64,
    pub cloud_s: f64,
}

impl LinkLatencies {
    pub fn from_config(config: &SimConfig) -> Self {
        Self {
            v2i_s: V2I_LATENCY_S,
            backhaul_s: config.handshake_delay_s,
            cloud_s: config.cloud_rtt_s,
        }
    }

    pub fn fixed(&self, kind: LinkKind) -> f64 {
        match kind {
            LinkKind::V2i => self.v2i_s,
            LinkKind::Backhaul => self.backhaul_s,
            LinkKind::Cloud => self.cloud_s,
        }
    }
}

pub fn hop_delay(size_bytes: u64, data_rate_bps: f64, kind: LinkKind, latencies: &LinkLatencies) -> f64 {
    transmission_time(size_bytes, data_rate_bps) + latencies.fixed(kind)
}

/// Slots occupied by one transmission, never fewer than one.
pub fn slot_span(transmission_time: f64, slot_duration: f64) -> u32 {
    // Exact multiples of the slot duration occupy exactly that many slots.
    ((transmission_time / slot_duration - 1e-9).ceil() as u32).max(1)
}

pub fn slot_of(time: f64, slot_duration: f64) -> i64 {
    (time / slot_duration).floor() as i64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub transmitter: NodeRef,
    pub origin: Point,
    pub range: f64,
    pub message_id: MessageId,
    pub start_slot: i64,
    pub slot_span: u32,
}

impl Transmission {
    pub fn end_slot(&self) -> i64 {
        self.start_slot + i64::from(self.slot_span)
    }

    pub fn overlaps(&self, other: &Transmission) -> bool {
        self.start_slot < other.end_slot() && other.start_slot < self.end_slot()
    }

    pub fn reaches(&self, receiver: Point) -> bool {
        in_range(self.origin, receiver, self.range)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Delivered,
    Collided,
    OutOfRange,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Delivered => "delivered",
            Outcome::Collided => "collided",
            Outcome::OutOfRange => "out_of_range",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReceptionOutcome {
    pub message_id: MessageId,
    pub receiver_id: NodeRef,
    pub outcome: Outcome,
}

/// Outcome of `transmissions[index]` at one receiver.
pub fn outcome_at(
    transmissions: &[Transmission],
    index: usize,
    receiver: NodeRef,
    position: Point,
) -> Outcome {
    let tx = &transmissions[index];
    if !tx.reaches(position) {
        return Outcome::OutOfRange;
    }
    let jammed = transmissions.iter().enumerate().any(|(j, other)| {
        j != index && other.transmitter != receiver && other.overlaps(tx) && other.reaches(position)
    });
    if jammed {
        Outcome::Collided
    } else {
        Outcome::Delivered
    }
}

/// Outcome of every transmission at every receiver, grouped by receiver in
/// input order. A receiver never hears its own transmissions.
pub fn detect_collisions(
    transmissions: &[Transmission],
    receivers: &[(NodeRef, Point)],
) -> Vec<ReceptionOutcome> {
    receivers
        .iter()
        .flat_map(|&(receiver, position)| {
            transmissions
                .iter()
                .enumerate()
                .filter(move |(_, tx)| tx.transmitter != receiver)
                .map(move |(i, tx)| ReceptionOutcome {
                    message_id: tx.message_id,
                    receiver_id: receiver,
                    outcome: outcome_at(transmissions, i, receiver, position),
                })
        })
        .collect()
}
