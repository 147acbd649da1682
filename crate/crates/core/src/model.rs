//! Domain types shared by every subsystem: identifiers, geometry, vehicles,
//! roadside infrastructure, messages and fog layers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::ModelError;

/// Meters per second in one mile per hour.
pub const MPH_TO_MPS: f64 = 0.44704;

/// Lateral spacing between adjacent lanes, in meters.
pub const LANE_WIDTH_M: f64 = 3.5;

pub fn mph_to_mps(mph: f64) -> f64 {
    mph * MPH_TO_MPS
}

pub fn mps_to_mph(mps: f64) -> f64 {
    mps / MPH_TO_MPS
}

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $inner:ty, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(VehicleId, u32, "V");
id_type!(RsuId, u32, "RSU");
id_type!(BaseStationId, u32, "BS");
id_type!(FogId, u32, "F");
id_type!(MessageId, u64, "M");

/// Any addressable node in the three-layer architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeRef {
    Vehicle(VehicleId),
    Rsu(RsuId),
    BaseStation(BaseStationId),
    Cloud,
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Vehicle(id) => id.fmt(f),
            NodeRef::Rsu(id) => id.fmt(f),
            NodeRef::BaseStation(id) => id.fmt(f),
            NodeRef::Cloud => f.write_str("cloud"),
        }
    }
}

/// A 2-D position in meters. `x` runs along the road axis, `y` across lanes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(self, other: Point) -> f64 {
        distance(self, other)
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Lateral coordinate of a lane's center line.
pub fn lane_y(lane: u32) -> f64 {
    f64::from(lane) * LANE_WIDTH_M
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// A terminal-layer node.
#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub position: Point,
    /// Current speed in m/s.
    pub speed: f64,
    /// Speed drawn at spawn; per-step jitter is applied around it.
    pub cruise_speed: f64,
    pub lane: u32,
    pub direction: Direction,
    /// Messages originated by this vehicle that still have undelivered recipients.
    pub buffer: Vec<MessageId>,
}

/// Road geometry and speed band a [`Vehicle`] must respect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadBounds {
    pub length_m: f64,
    pub lane_count: u32,
    pub min_speed_mps: f64,
    pub max_speed_mps: f64,
}

impl Vehicle {
    pub fn new(
        id: VehicleId,
        x: f64,
        lane: u32,
        direction: Direction,
        speed: f64,
        road: &RoadBounds,
    ) -> Result<Self, ModelError> {
        let vehicle = Self {
            id,
            position: Point::new(x, lane_y(lane)),
            speed,
            cruise_speed: speed,
            lane,
            direction,
            buffer: Vec::new(),
        };
        vehicle.check(road)?;
        Ok(vehicle)
    }

    pub fn check(&self, road: &RoadBounds) -> Result<(), ModelError> {
        if !(0.0..=road.length_m).contains(&self.position.x) {
            return Err(ModelError::OffRoad { vehicle: self.id, x: self.position.x });
        }
        if self.lane >= road.lane_count {
            return Err(ModelError::BadLane { vehicle: self.id, lane: self.lane });
        }
        // Tolerate rounding from the mph conversion at the band edges.
        let eps = 1e-9;
        if self.speed < road.min_speed_mps - eps || self.speed > road.max_speed_mps + eps {
            return Err(ModelError::SpeedOutOfBand { vehicle: self.id, speed: self.speed });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rsu {
    pub id: RsuId,
    pub position: Point,
    pub range: f64,
    pub base_station_id: BaseStationId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseStation {
    pub id: BaseStationId,
    pub position: Point,
    pub coverage_radius: f64,
    pub rsu_ids: BTreeSet<RsuId>,
}

/// Fixed roadside infrastructure: RSUs grouped under base stations.
#[derive(Debug, Clone, PartialEq)]
pub struct Infrastructure {
    rsus: Vec<Rsu>,
    base_stations: Vec<BaseStation>,
}

impl Infrastructure {
    /// Builds and validates the infrastructure. Ids must be dense (`RsuId(i)`
    /// at index `i`), every RSU must reference an existing base station and
    /// each base station's coverage must contain its RSUs' regions.
    pub fn new(rsus: Vec<Rsu>, base_stations: Vec<BaseStation>) -> Result<Self, ModelError> {
        for (i, rsu) in rsus.iter().enumerate() {
            if rsu.id.0 as usize != i {
                return Err(ModelError::SparseId(rsu.id.to_string()));
            }
            if rsu.range <= 0.0 {
                return Err(ModelError::NonPositiveRange(rsu.id));
            }
            let Some(bs) = base_stations.get(rsu.base_station_id.0 as usize) else {
                return Err(ModelError::UnknownBaseStation { rsu: rsu.id, bs: rsu.base_station_id });
            };
            if !bs.rsu_ids.contains(&rsu.id) {
                return Err(ModelError::UnknownBaseStation { rsu: rsu.id, bs: rsu.base_station_id });
            }
        }
        for (i, bs) in base_stations.iter().enumerate() {
            if bs.id.0 as usize != i {
                return Err(ModelError::SparseId(bs.id.to_string()));
            }
            let max_range = bs
                .rsu_ids
                .iter()
                .filter_map(|r| rsus.get(r.0 as usize))
                .map(|r| r.range)
                .fold(0.0, f64::max);
            if bs.coverage_radius <= max_range {
                return Err(ModelError::CoverageTooSmall {
                    bs: bs.id,
                    coverage: bs.coverage_radius,
                    rsu_range: max_range,
                });
            }
        }
        Ok(Self { rsus, base_stations })
    }

    /// RSUs every `rsu_spacing` meters (centered in their segment) and one
    /// base station per `bs_spacing` segment. RSUs sit on the roadside
    /// line just below lane 0.
    pub fn along_road(
        road_length: f64,
        rsu_spacing: f64,
        bs_spacing: f64,
        rsu_range: f64,
    ) -> Result<Self, ModelError> {
        let roadside_y = -LANE_WIDTH_M;
        let bs_count = ((road_length / bs_spacing).ceil() as u32).max(1);
        let rsu_count = ((road_length / rsu_spacing).ceil() as u32).max(1);
        let mut base_stations: Vec<BaseStation> = (0..bs_count)
            .map(|j| BaseStation {
                id: BaseStationId(j),
                position: Point::new(
                    (bs_spacing * (f64::from(j) + 0.5)).min(road_length),
                    roadside_y,
                ),
                coverage_radius: 0.0,
                rsu_ids: BTreeSet::new(),
            })
            .collect();
        let rsus: Vec<Rsu> = (0..rsu_count)
            .map(|i| {
                let x = (rsu_spacing * (f64::from(i) + 0.5)).min(road_length);
                let bs = ((x / bs_spacing) as u32).min(bs_count - 1);
                Rsu {
                    id: RsuId(i),
                    position: Point::new(x, roadside_y),
                    range: rsu_range,
                    base_station_id: BaseStationId(bs),
                }
            })
            .collect();
        for rsu in &rsus {
            let bs = &mut base_stations[rsu.base_station_id.0 as usize];
            bs.rsu_ids.insert(rsu.id);
            // Cover every point any of this station's RSUs can reach.
            let reach = distance(bs.position, rsu.position) + rsu.range;
            bs.coverage_radius = bs.coverage_radius.max(reach);
        }
        for bs in &mut base_stations {
            if bs.rsu_ids.is_empty() {
                bs.coverage_radius = rsu_range + bs_spacing / 2.0;
            }
        }
        Self::new(rsus, base_stations)
    }

    pub fn rsus(&self) -> &[Rsu] {
        &self.rsus
    }

    pub fn base_stations(&self) -> &[BaseStation] {
        &self.base_stations
    }

    pub fn rsu(&self, id: RsuId) -> &Rsu {
        &self.rsus[id.0 as usize]
    }

    pub fn base_station(&self, id: BaseStationId) -> &BaseStation {
        &self.base_stations[id.0 as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub id: MessageId,
    pub sender_id: VehicleId,
    pub recipient_ids: BTreeSet<VehicleId>,
    pub size_bytes: u32,
    pub created_at: f64,
    pub delivered_at: BTreeMap<VehicleId, f64>,
    pub hop_count: BTreeMap<VehicleId, u32>,
}

impl Message {
    pub fn new(
        id: MessageId,
        sender_id: VehicleId,
        recipient_ids: BTreeSet<VehicleId>,
        size_bytes: u32,
        created_at: f64,
    ) -> Result<Self, ModelError> {
        if recipient_ids.is_empty() {
            return Err(ModelError::NoRecipients(id));
        }
        if recipient_ids.contains(&sender_id) {
            return Err(ModelError::SelfAddressed { message: id, sender: sender_id });
        }
        if size_bytes == 0 {
            return Err(ModelError::EmptyPayload(id));
        }
        Ok(Self {
            id,
            sender_id,
            recipient_ids,
            size_bytes,
            created_at,
            delivered_at: BTreeMap::new(),
            hop_count: BTreeMap::new(),
        })
    }

    pub fn record_delivery(
        &mut self,
        recipient: VehicleId,
        at: f64,
        hops: u32,
    ) -> Result<(), ModelError> {
        if !self.recipient_ids.contains(&recipient) {
            return Err(ModelError::NotARecipient { message: self.id, vehicle: recipient });
        }
        if at < self.created_at {
            return Err(ModelError::DeliveredBeforeCreation { message: self.id, at });
        }
        self.delivered_at.insert(recipient, at);
        self.hop_count.insert(recipient, hops);
        Ok(())
    }

    pub fn is_fully_delivered(&self) -> bool {
        self.delivered_at.len() == self.recipient_ids.len()
    }
}

/// A dynamic grouping of vehicles served by one base station.
#[derive(Debug, Clone, PartialEq)]
pub struct FogLayer {
    pub id: FogId,
    pub base_station_id: BaseStationId,
    pub member_vehicle_ids: BTreeSet<VehicleId>,
    pub rsu_ids: BTreeSet<RsuId>,
    pub created_at: f64,
    pub allocated_units: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        assert_eq!(distance(Point::new(0.0, 0.0), Point::new(3.0, 4.0)), 5.0);
        let p = Point::new(17.5, -3.25);
        assert_eq!(distance(p, p), 0.0);
        assert!((distance(Point::new(0.0, 0.0), Point::new(1.0, 1.0)) - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn mph_round_trip() {
        assert!((mps_to_mph(mph_to_mps(30.0)) - 30.0).abs() < 1e-9);
        assert!((mph_to_mps(65.0) - 29.0576).abs() < 1e-12);
    }

    #[test]
    fn default_road_infrastructure() {
        let infra = Infrastructure::along_road(1000.0, 250.0, 500.0, 300.0).unwrap();
        assert_eq!(infra.rsus().len(), 4);
        assert_eq!(infra.base_stations().len(), 2);
        let xs: Vec<f64> = infra.rsus().iter().map(|r| r.position.x).collect();
        assert_eq!(xs, vec![125.0, 375.0, 625.0, 875.0]);
        assert_eq!(infra.rsu(RsuId(1)).base_station_id, BaseStationId(0));
        assert_eq!(infra.rsu(RsuId(2)).base_station_id, BaseStationId(1));
        for bs in infra.base_stations() {
            assert_eq!(bs.coverage_radius, 425.0);
        }
    }

    #[test]
    fn coverage_must_exceed_rsu_range() {
        let rsu = Rsu {
            id: RsuId(0),
            position: Point::default(),
            range: 300.0,
            base_station_id: BaseStationId(0),
        };
        let bs = BaseStation {
            id: BaseStationId(0),
            position: Point::default(),
            coverage_radius: 300.0,
            rsu_ids: [RsuId(0)].into(),
        };
        assert!(matches!(
            Infrastructure::new(vec![rsu.clone()], vec![bs.clone()]),
            Err(ModelError::CoverageTooSmall { .. })
        ));
        let dangling = Rsu { base_station_id: BaseStationId(3), ..rsu };
        assert!(matches!(
            Infrastructure::new(vec![dangling], vec![BaseStation { coverage_radius: 400.0, ..bs }]),
            Err(ModelError::UnknownBaseStation { .. })
        ));
    }

    #[test]
    fn message_rejects_self_addressed() {
        let err = Message::new(MessageId(1), VehicleId(4), [VehicleId(4)].into(), 256, 0.0);
        assert!(matches!(err, Err(ModelError::SelfAddressed { .. })));
        let err = Message::new(MessageId(1), VehicleId(4), BTreeSet::new(), 256, 0.0);
        assert!(matches!(err, Err(ModelError::NoRecipients(_))));
    }

    #[test]
    fn delivery_cannot_precede_creation() {
        let mut m = Message::new(MessageId(1), VehicleId(0), [VehicleId(1)].into(), 256, 2.0).unwrap();
        assert!(m.record_delivery(VehicleId(1), 1.5, 1).is_err());
        m.record_delivery(VehicleId(1), 2.5, 3).unwrap();
        assert!(m.is_fully_delivered());
    }

    #[test]
    fn vehicle_invariants() {
        let road = RoadBounds {
            length_m: 1000.0,
            lane_count: 4,
            min_speed_mps: mph_to_mps(30.0),
            max_speed_mps: mph_to_mps(65.0),
        };
        assert!(Vehicle::new(VehicleId(0), 10.0, 1, Direction::Forward, 20.0, &road).is_ok());
        assert!(Vehicle::new(VehicleId(0), 1000.5, 1, Direction::Forward, 20.0, &road).is_err());
        assert!(Vehicle::new(VehicleId(0), 10.0, 4, Direction::Forward, 20.0, &road).is_err());
        assert!(Vehicle::new(VehicleId(0), 10.0, 0, Direction::Forward, 40.0, &road).is_err());
    }

    fn point() -> impl Strategy<Value = Point> {
        (-1e4..1e4f64, -1e4..1e4f64).prop_map(|(x, y)| Point::new(x, y))
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in point(), b in point(), c in point()) {
            let ab = distance(a, b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, distance(b, a));
            prop_assert!(distance(a, c) <= ab + distance(b, c) + 1e-9);
        }
    }
}
