//! Fog-layer lifecycle: association, capacity, split/merge, destruction and
//! the cloud-side resource ledger.
//!
//! A fog is a set of vehicles served by one base station. Fogs split when
//! their members spread further apart than `d_min` or when the fog's share
//! of the vehicles in the base station's region exceeds `th_cap`; two fogs
//! under one base station merge when both conditions are comfortably met
//! for their union.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use tracing::warn;

use crate::error::FogError;
use crate::model::{
    distance, BaseStationId, FogId, FogLayer, Infrastructure, MessageId, Point, RsuId, Vehicle,
    VehicleId,
};
use crate::radio::in_range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Association {
    pub rsu: RsuId,
    pub base_station: BaseStationId,
}

/// Each vehicle attaches to its nearest in-range RSU (lowest id on ties) and
/// through it to that RSU's base station. Unreachable vehicles are absent.
pub fn associate(vehicles: &[Vehicle], infra: &Infrastructure) -> BTreeMap<VehicleId, Association> {
    vehicles
        .iter()
        .filter_map(|v| nearest_rsu(v.position, infra, |_| true).map(|a| (v.id, a)))
        .collect()
}

/// Nearest in-range RSU satisfying `allowed`, lowest id on ties.
pub fn nearest_rsu(
    position: Point,
    infra: &Infrastructure,
    allowed: impl Fn(&crate::model::Rsu) -> bool,
) -> Option<Association> {
    let mut best: Option<(f64, Association)> = None;
    for rsu in infra.rsus() {
        if !allowed(rsu) || !in_range(rsu.position, position, rsu.range) {
            continue;
        }
        let d = distance(rsu.position, position);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, Association { rsu: rsu.id, base_station: rsu.base_station_id }));
        }
    }
    best.map(|(_, a)| a)
}

/// Fog capacity `f_c = n_v / t_v`: members over the vehicles in the region.
pub fn fog_capacity(members: usize, region_vehicle_count: usize) -> Result<f64, FogError> {
    if region_vehicle_count == 0 {
        return Err(FogError::UndefinedRegion);
    }
    if members > region_vehicle_count {
        return Err(FogError::MembersExceedRegion { members, region: region_vehicle_count });
    }
    Ok(members as f64 / region_vehicle_count as f64)
}

/// Vehicles inside a base station's coverage disk.
pub fn region_vehicle_count(
    infra: &Infrastructure,
    bs: BaseStationId,
    positions: impl IntoIterator<Item = Point>,
) -> usize {
    let station = infra.base_station(bs);
    positions
        .into_iter()
        .filter(|p| distance(station.position, *p) <= station.coverage_radius)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitReason {
    Distance,
    Capacity,
    /// Members ended up under different base stations without either
    /// predicate firing.
    Handover,
}

impl SplitReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitReason::Distance => "distance",
            SplitReason::Capacity => "capacity",
            SplitReason::Handover => "handover",
        }
    }
}

/// Split predicate seen from one sender. Distance is checked first.
pub fn should_split(
    sender: Point,
    members: &[Point],
    d_min: f64,
    th_cap: f64,
    region_vehicle_count: usize,
) -> Result<Option<SplitReason>, FogError> {
    if members.iter().any(|&m| distance(sender, m) > d_min) {
        return Ok(Some(SplitReason::Distance));
    }
    if fog_capacity(members.len(), region_vehicle_count)? > th_cap {
        return Ok(Some(SplitReason::Capacity));
    }
    Ok(None)
}

/// Split predicate over every member acting as sender: the distance arm
/// fires iff some pair of members is further apart than `d_min`.
pub fn fog_should_split(
    members: &[Point],
    d_min: f64,
    th_cap: f64,
    region_vehicle_count: usize,
) -> Result<Option<SplitReason>, FogError> {
    if any_pair_farther_than(members, d_min) {
        return Ok(Some(SplitReason::Distance));
    }
    if fog_capacity(members.len(), region_vehicle_count)? > th_cap {
        return Ok(Some(SplitReason::Capacity));
    }
    Ok(None)
}

/// Merge predicate: every cross pair within `d_min` and the union's
/// capacity at most `th_cap`.
pub fn should_merge(
    a: &[Point],
    b: &[Point],
    d_min: f64,
    th_cap: f64,
    region_vehicle_count: usize,
) -> Result<bool, FogError> {
    if !all_cross_pairs_within(a, b, d_min) {
        return Ok(false);
    }
    Ok(fog_capacity(a.len() + b.len(), region_vehicle_count)? <= th_cap)
}

struct Bbox {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

fn bbox(points: impl IntoIterator<Item = Point>) -> Option<Bbox> {
    let mut it = points.into_iter();
    let first = it.next()?;
    let mut b = Bbox { min_x: first.x, max_x: first.x, min_y: first.y, max_y: first.y };
    for p in it {
        b.min_x = b.min_x.min(p.x);
        b.max_x = b.max_x.max(p.x);
        b.min_y = b.min_y.min(p.y);
        b.max_y = b.max_y.max(p.y);
    }
    Some(b)
}

fn any_pair_farther_than(points: &[Point], d: f64) -> bool {
    let Some(b) = bbox(points.iter().copied()) else { return false };
    let (dx, dy) = (b.max_x - b.min_x, b.max_y - b.min_y);
    if dx > d || dy > d {
        return true;
    }
    if dx.hypot(dy) <= d {
        return false;
    }
    points
        .iter()
        .enumerate()
        .any(|(i, &p)| points[i + 1..].iter().any(|&q| distance(p, q) > d))
}

fn all_cross_pairs_within(a: &[Point], b: &[Point], d: f64) -> bool {
    let (Some(ba), Some(bb)) = (bbox(a.iter().copied()), bbox(b.iter().copied())) else {
        return true;
    };
    let reach_x = (bb.max_x - ba.min_x).max(ba.max_x - bb.min_x);
    let reach_y = (bb.max_y - ba.min_y).max(ba.max_y - bb.min_y);
    if reach_x > d || reach_y > d {
        return false;
    }
    if reach_x.hypot(reach_y) <= d {
        return true;
    }
    a.iter().all(|&p| b.iter().all(|&q| distance(p, q) <= d))
}

/// Cloud-layer bookkeeping of resource units held by each fog.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceLedger {
    total_pool: u64,
    allocations: BTreeMap<FogId, u64>,
}

impl ResourceLedger {
    pub fn new(total_pool: u64) -> Self {
        Self { total_pool, allocations: BTreeMap::new() }
    }

    pub fn total_pool(&self) -> u64 {
        self.total_pool
    }

    pub fn allocated_total(&self) -> u64 {
        self.allocations.values().sum()
    }

    /// Units not held by any fog.
    pub fn remaining(&self) -> u64 {
        self.total_pool - self.allocated_total()
    }

    pub fn allocated(&self, fog: FogId) -> u64 {
        self.allocations.get(&fog).copied().unwrap_or(0)
    }

    pub fn allocations(&self) -> &BTreeMap<FogId, u64> {
        &self.allocations
    }

    pub fn allocate(&mut self, fog: FogId, units: u64) -> Result<(), FogError> {
        if units == 0 {
            return Ok(());
        }
        let available = self.remaining();
        if units > available {
            return Err(FogError::OverAllocation { fog, requested: units, available });
        }
        *self.allocations.entry(fog).or_insert(0) += units;
        Ok(())
    }

    pub fn release(&mut self, fog: FogId, units: u64) -> Result<(), FogError> {
        let held = self.allocated(fog);
        if units > held {
            return Err(FogError::OverRelease { fog, requested: units, held });
        }
        if units == held {
            self.allocations.remove(&fog);
        } else if let Some(h) = self.allocations.get_mut(&fog) {
            *h -= units;
        }
        Ok(())
    }

    /// Allocates up to `units`, as many as the pool still holds.
    pub fn allocate_up_to(&mut self, fog: FogId, units: u64) -> u64 {
        let granted = units.min(self.remaining());
        self.allocate(fog, granted).expect("granted units fit the pool");
        granted
    }

    fn release_all(&mut self, fog: FogId) -> u64 {
        self.allocations.remove(&fog).unwrap_or(0)
    }
}

/// Where a vehicle is and which RSU/base station it is attached to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleView {
    pub position: Point,
    pub association: Option<Association>,
}

/// Per-vehicle view indexed by dense vehicle id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Snapshot {
    views: Vec<VehicleView>,
}

impl Snapshot {
    pub fn new(vehicles: &[Vehicle], associations: &BTreeMap<VehicleId, Association>) -> Self {
        let mut views = vec![
            VehicleView { position: Point::default(), association: None };
            vehicles.iter().map(|v| v.id.0 as usize + 1).max().unwrap_or(0)
        ];
        for v in vehicles {
            views[v.id.0 as usize] =
                VehicleView { position: v.position, association: associations.get(&v.id).copied() };
        }
        Self { views }
    }

    pub fn get(&self, id: VehicleId) -> VehicleView {
        self.views[id.0 as usize]
    }

    pub fn position(&self, id: VehicleId) -> Point {
        self.views[id.0 as usize].position
    }

    pub fn iter(&self) -> impl Iterator<Item = (VehicleId, &VehicleView)> {
        self.views.iter().enumerate().map(|(i, v)| (VehicleId(i as u32), v))
    }

    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        self.views.iter().map(|v| v.position)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FogEventKind {
    Create { fog: FogId, base_station: BaseStationId, members: usize, units: u64 },
    Split { fog: FogId, into: (FogId, FogId), reason: SplitReason, capacity: Option<f64> },
    SplitRefused { fog: FogId, reason: SplitReason },
    Merge { fogs: Vec<FogId>, into: FogId, capacity: f64 },
    Rehome { fog: FogId, from: BaseStationId, to: BaseStationId },
    Destroy { fog: FogId, released_units: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FogEvent {
    pub time: f64,
    pub kind: FogEventKind,
}

impl FogEventKind {
    pub fn label(&self) -> &'static str {
        match self {
            FogEventKind::Create { .. } => "CREATE",
            FogEventKind::Split { .. } => "SPLIT",
            FogEventKind::SplitRefused { .. } => "SPLIT_REFUSED",
            FogEventKind::Merge { .. } => "MERGE",
            FogEventKind::Rehome { .. } => "REHOME",
            FogEventKind::Destroy { .. } => "DESTROY",
        }
    }

    pub fn capacity(&self) -> Option<f64> {
        match self {
            FogEventKind::Split { capacity, .. } => *capacity,
            FogEventKind::Merge { capacity, .. } => Some(*capacity),
            _ => None,
        }
    }
}

impl fmt::Display for FogEventKind {
    /// Detail column of the event log.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FogEventKind::Create { fog, base_station, members, units } => {
                write!(f, "fog={fog} bs={base_station} members={members} units={units}")
            }
            FogEventKind::Split { fog, into, reason, capacity } => {
                write!(f, "{fog}->{}+{} reason={}", into.0, into.1, reason.as_str())?;
                if let Some(c) = capacity {
                    write!(f, " f_c={c}")?;
                }
                Ok(())
            }
            FogEventKind::SplitRefused { fog, reason } => {
                write!(f, "fog={fog} reason={} single member", reason.as_str())
            }
            FogEventKind::Merge { fogs, into, capacity } => {
                let ids: Vec<String> = fogs.iter().map(ToString::to_string).collect();
                write!(f, "{}->{into} f_c={capacity}", ids.join("+"))
            }
            FogEventKind::Rehome { fog, from, to } => write!(f, "fog={fog} {from}->{to}"),
            FogEventKind::Destroy { fog, released_units } => {
                write!(f, "fog={fog} released={released_units}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitOutcome {
    Split { fog_a: FogId, fog_b: FogId },
    /// A single-member fog cannot be partitioned.
    Refused,
}

/// Live fogs and the vehicle/RSU ↔ fog bookkeeping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FogTopology {
    fogs: BTreeMap<FogId, FogLayer>,
    vehicle_to_fog: BTreeMap<VehicleId, FogId>,
    rsu_to_fog: BTreeMap<RsuId, BTreeSet<FogId>>,
    in_flight: BTreeMap<FogId, BTreeSet<MessageId>>,
    next_id: u32,
}

impl FogTopology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fogs(&self) -> impl Iterator<Item = &FogLayer> {
        self.fogs.values()
    }

    pub fn fog(&self, id: FogId) -> Option<&FogLayer> {
        self.fogs.get(&id)
    }

    pub fn fog_ids(&self) -> Vec<FogId> {
        self.fogs.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.fogs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fogs.is_empty()
    }

    pub fn fog_of(&self, vehicle: VehicleId) -> Option<FogId> {
        self.vehicle_to_fog.get(&vehicle).copied()
    }

    pub fn fogs_of_rsu(&self, rsu: RsuId) -> impl Iterator<Item = FogId> + '_ {
        self.rsu_to_fog.get(&rsu).into_iter().flatten().copied()
    }

    pub fn pending_messages(&self, fog: FogId) -> impl Iterator<Item = MessageId> + '_ {
        self.in_flight.get(&fog).into_iter().flatten().copied()
    }

    fn fresh_id(&mut self) -> FogId {
        let id = FogId(self.next_id);
        self.next_id += 1;
        id
    }

    fn member_positions(&self, fog: FogId, snap: &Snapshot) -> Vec<Point> {
        self.fogs[&fog].member_vehicle_ids.iter().map(|&v| snap.position(v)).collect()
    }

    fn insert_fog(&mut self, fog: FogLayer) {
        for &v in &fog.member_vehicle_ids {
            self.vehicle_to_fog.insert(v, fog.id);
        }
        for &r in &fog.rsu_ids {
            self.rsu_to_fog.entry(r).or_default().insert(fog.id);
        }
        self.fogs.insert(fog.id, fog);
    }

    fn remove_fog(&mut self, id: FogId) -> FogLayer {
        let fog = self.fogs.remove(&id).expect("fog is live");
        for v in &fog.member_vehicle_ids {
            if self.vehicle_to_fog.get(v) == Some(&id) {
                self.vehicle_to_fog.remove(v);
            }
        }
        for r in &fog.rsu_ids {
            if let Some(set) = self.rsu_to_fog.get_mut(r) {
                set.remove(&id);
                if set.is_empty() {
                    self.rsu_to_fog.remove(r);
                }
            }
        }
        fog
    }

    fn rsus_of(members: &BTreeSet<VehicleId>, snap: &Snapshot) -> BTreeSet<RsuId> {
        members.iter().filter_map(|&v| snap.get(v).association.map(|a| a.rsu)).collect()
    }

    /// Creates a fog under `bs` holding `members`, granting up to
    /// `units_per_member` units each from the ledger.
    pub fn create_fog(
        &mut self,
        ledger: &mut ResourceLedger,
        bs: BaseStationId,
        members: BTreeSet<VehicleId>,
        snap: &Snapshot,
        units_per_member: u64,
        now: f64,
    ) -> (FogId, u64) {
        let id = self.fresh_id();
        for v in &members {
            if let Some(old) = self.vehicle_to_fog.get(v).copied() {
                self.detach(*v, old, snap);
            }
        }
        let units = ledger.allocate_up_to(id, units_per_member * members.len() as u64);
        let fog = FogLayer {
            id,
            base_station_id: bs,
            rsu_ids: Self::rsus_of(&members, snap),
            member_vehicle_ids: members,
            created_at: now,
            allocated_units: units,
        };
        self.insert_fog(fog);
        (id, units)
    }

    fn detach(&mut self, vehicle: VehicleId, fog: FogId, snap: &Snapshot) {
        self.vehicle_to_fog.remove(&vehicle);
        if let Some(f) = self.fogs.get_mut(&fog) {
            f.member_vehicle_ids.remove(&vehicle);
        }
        self.refresh_rsus_of(fog, snap);
    }

    pub fn remove_member(&mut self, vehicle: VehicleId, snap: &Snapshot) -> Option<FogId> {
        let fog = self.vehicle_to_fog.get(&vehicle).copied()?;
        self.detach(vehicle, fog, snap);
        Some(fog)
    }

    pub fn add_member(&mut self, fog: FogId, vehicle: VehicleId, snap: &Snapshot) -> Result<(), FogError> {
        if !self.fogs.contains_key(&fog) {
            return Err(FogError::UnknownFog(fog));
        }
        if let Some(old) = self.vehicle_to_fog.get(&vehicle).copied() {
            self.detach(vehicle, old, snap);
        }
        self.fogs.get_mut(&fog).expect("checked").member_vehicle_ids.insert(vehicle);
        self.vehicle_to_fog.insert(vehicle, fog);
        self.refresh_rsus_of(fog, snap);
        Ok(())
    }

    fn refresh_rsus_of(&mut self, fog: FogId, snap: &Snapshot) {
        let Some(f) = self.fogs.get_mut(&fog) else { return };
        let fresh = Self::rsus_of(&f.member_vehicle_ids, snap);
        let stale = std::mem::replace(&mut f.rsu_ids, fresh.clone());
        for r in stale.difference(&fresh) {
            if let Some(set) = self.rsu_to_fog.get_mut(r) {
                set.remove(&fog);
                if set.is_empty() {
                    self.rsu_to_fog.remove(r);
                }
            }
        }
        for &r in &fresh {
            self.rsu_to_fog.entry(r).or_default().insert(fog);
        }
    }

    /// Recomputes every fog's RSU set from current associations.
    pub fn refresh_rsus(&mut self, snap: &Snapshot) {
        for id in self.fog_ids() {
            self.refresh_rsus_of(id, snap);
        }
    }

    pub fn set_allocated(&mut self, fog: FogId, units: u64) {
        if let Some(f) = self.fogs.get_mut(&fog) {
            f.allocated_units = units;
        }
    }

    pub fn note_routed(&mut self, fog: FogId, message: MessageId) {
        if self.fogs.contains_key(&fog) {
            self.in_flight.entry(fog).or_default().insert(message);
        }
    }

    pub fn note_resolved(&mut self, message: MessageId) {
        self.in_flight.retain(|_, set| {
            set.remove(&message);
            !set.is_empty()
        });
    }

    /// Splits `fog` in two. Members under different base stations are
    /// separated along base-station lines (the fog's own station's group
    /// first); otherwise the members are cut at the position median along
    /// the road. Units are shared in proportion to member counts with the
    /// remainder going to `fog_a`.
    pub fn split_fog(
        &mut self,
        ledger: &mut ResourceLedger,
        fog: FogId,
        snap: &Snapshot,
        now: f64,
    ) -> Result<SplitOutcome, FogError> {
        let parent = self.fogs.get(&fog).ok_or(FogError::UnknownFog(fog))?;
        if parent.member_vehicle_ids.len() < 2 {
            warn!(%fog, "single-member fog cannot split");
            return Ok(SplitOutcome::Refused);
        }
        let mut by_bs: BTreeMap<Option<BaseStationId>, BTreeSet<VehicleId>> = BTreeMap::new();
        for &v in &parent.member_vehicle_ids {
            by_bs.entry(snap.get(v).association.map(|a| a.base_station)).or_default().insert(v);
        }
        let (a_members, b_members, a_bs, b_bs) = if by_bs.len() > 1 {
            let own = Some(parent.base_station_id);
            let key = if by_bs.contains_key(&own) { own } else { *by_bs.keys().next().expect("non-empty") };
            let a = by_bs.remove(&key).expect("present");
            let b: BTreeSet<VehicleId> = by_bs.values().flatten().copied().collect();
            let b_bs = by_bs
                .iter()
                .max_by(|x, y| x.1.len().cmp(&y.1.len()).then(y.0.cmp(x.0)))
                .and_then(|(bs, _)| *bs)
                .unwrap_or(parent.base_station_id);
            (a, b, key.unwrap_or(parent.base_station_id), b_bs)
        } else {
            let mut ordered: Vec<VehicleId> = parent.member_vehicle_ids.iter().copied().collect();
            ordered.sort_by(|x, y| snap.position(*x).x.total_cmp(&snap.position(*y).x).then(x.cmp(y)));
            let cut = ordered.len().div_ceil(2);
            let b = ordered.split_off(cut);
            (ordered.into_iter().collect(), b.into_iter().collect(), parent.base_station_id, parent.base_station_id)
        };

        let total = parent.member_vehicle_ids.len() as u64;
        let old = self.remove_fog(fog);
        let pending = self.in_flight.remove(&fog).unwrap_or_default();
        let units = ledger.release_all(fog);
        debug_assert_eq!(units, old.allocated_units);
        let units_b = units * b_members.len() as u64 / total;
        let units_a = units - units_b;

        let id_a = self.fresh_id();
        let id_b = self.fresh_id();
        for (id, members, bs, u) in [(id_a, a_members, a_bs, units_a), (id_b, b_members, b_bs, units_b)] {
            ledger.allocate(id, u)?;
            if !pending.is_empty() {
                self.in_flight.insert(id, pending.clone());
            }
            self.insert_fog(FogLayer {
                id,
                base_station_id: bs,
                rsu_ids: Self::rsus_of(&members, snap),
                member_vehicle_ids: members,
                created_at: now,
                allocated_units: u,
            });
        }
        Ok(SplitOutcome::Split { fog_a: id_a, fog_b: id_b })
    }

    /// Unions `ids` into one new fog under their shared base station.
    pub fn merge_fogs(
        &mut self,
        ledger: &mut ResourceLedger,
        ids: &[FogId],
        snap: &Snapshot,
        now: f64,
    ) -> Result<FogId, FogError> {
        let distinct: BTreeSet<FogId> = ids.iter().copied().collect();
        if distinct.len() < 2 || distinct.len() != ids.len() {
            return Err(FogError::DegenerateMerge(ids.to_vec()));
        }
        for id in &distinct {
            if !self.fogs.contains_key(id) {
                return Err(FogError::UnknownFog(*id));
            }
        }
        let bs = self.fogs[&ids[0]].base_station_id;
        if distinct.iter().any(|id| self.fogs[id].base_station_id != bs) {
            return Err(FogError::MixedBaseStations);
        }
        let mut members = BTreeSet::new();
        let mut pending = BTreeSet::new();
        let mut units = 0;
        for &id in &distinct {
            let old = self.remove_fog(id);
            members.extend(old.member_vehicle_ids);
            pending.extend(self.in_flight.remove(&id).unwrap_or_default());
            units += ledger.release_all(id);
        }
        let id = self.fresh_id();
        ledger.allocate(id, units)?;
        if !pending.is_empty() {
            self.in_flight.insert(id, pending);
        }
        self.insert_fog(FogLayer {
            id,
            base_station_id: bs,
            rsu_ids: Self::rsus_of(&members, snap),
            member_vehicle_ids: members,
            created_at: now,
            allocated_units: units,
        });
        Ok(id)
    }

    /// Removes `fog` and returns its units to the pool. Refused while
    /// messages routed through the fog are still undelivered.
    pub fn destroy_fog(&mut self, ledger: &mut ResourceLedger, fog: FogId) -> Result<u64, FogError> {
        if !self.fogs.contains_key(&fog) {
            return Err(FogError::UnknownFog(fog));
        }
        if let Some(pending) = self.in_flight.get(&fog) {
            if !pending.is_empty() {
                return Err(FogError::PendingMessages { fog, pending: pending.iter().copied().collect() });
            }
        }
        self.remove_fog(fog);
        Ok(ledger.release_all(fog))
    }

    /// Checks the bookkeeping invariants; returns a description of the first
    /// violation found.
    pub fn check_consistency(&self, ledger: &ResourceLedger) -> Result<(), String> {
        let mut seen = BTreeMap::new();
        for fog in self.fogs.values() {
            for v in &fog.member_vehicle_ids {
                if let Some(other) = seen.insert(*v, fog.id) {
                    return Err(format!("{v} is in both {other} and {}", fog.id));
                }
                if self.vehicle_to_fog.get(v) != Some(&fog.id) {
                    return Err(format!("{v} in {} but mapped elsewhere", fog.id));
                }
            }
            for r in &fog.rsu_ids {
                if !self.rsu_to_fog.get(r).is_some_and(|s| s.contains(&fog.id)) {
                    return Err(format!("{r} missing back-reference to {}", fog.id));
                }
            }
            if ledger.allocated(fog.id) != fog.allocated_units {
                return Err(format!(
                    "{} holds {} units but the ledger says {}",
                    fog.id,
                    fog.allocated_units,
                    ledger.allocated(fog.id)
                ));
            }
        }
        if seen.len() != self.vehicle_to_fog.len() {
            return Err("vehicle map references vehicles outside any fog".into());
        }
        for (r, set) in &self.rsu_to_fog {
            for f in set {
                if !self.fogs.get(f).is_some_and(|fog| fog.rsu_ids.contains(r)) {
                    return Err(format!("{r} maps to {f} which does not list it"));
                }
            }
        }
        if ledger.allocations().keys().any(|f| !self.fogs.contains_key(f)) {
            return Err("ledger holds units for a retired fog".into());
        }
        if ledger.allocated_total() > ledger.total_pool() {
            return Err("ledger over-committed".into());
        }
        Ok(())
    }
}

/// Knobs for one orchestration pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrchestrationParams {
    pub d_min: f64,
    pub th_cap: f64,
    /// Evaluate split/merge (including base-station handover splits).
    pub split_merge: bool,
    pub units_per_member: u64,
}

/// One pass over the topology: drop unreachable members, separate members
/// that moved under another base station, attach fogless vehicles, apply
/// the split and merge predicates, then destroy empty fogs.
pub fn orchestrate(
    topology: &mut FogTopology,
    ledger: &mut ResourceLedger,
    snap: &Snapshot,
    infra: &Infrastructure,
    params: &OrchestrationParams,
    now: f64,
    events: &mut Vec<FogEvent>,
) -> Result<(), FogError> {
    let mut emit = |kind| events.push(FogEvent { time: now, kind });

    for (v, view) in snap.iter() {
        if view.association.is_none() {
            topology.remove_member(v, snap);
        }
    }
    topology.refresh_rsus(snap);

    if params.split_merge {
        for id in topology.fog_ids() {
            let mut current = id;
            loop {
                let fog = &topology.fogs[&current];
                let stations: BTreeSet<BaseStationId> = fog
                    .member_vehicle_ids
                    .iter()
                    .filter_map(|&v| snap.get(v).association.map(|a| a.base_station))
                    .collect();
                if stations.len() <= 1 {
                    if let Some(&to) = stations.first() {
                        if to != fog.base_station_id {
                            let from = fog.base_station_id;
                            topology.fogs.get_mut(&current).expect("live").base_station_id = to;
                            emit(FogEventKind::Rehome { fog: current, from, to });
                        }
                    }
                    break;
                }
                match topology.split_fog(ledger, current, snap, now)? {
                    SplitOutcome::Split { fog_a, fog_b } => {
                        emit(FogEventKind::Split {
                            fog: current,
                            into: (fog_a, fog_b),
                            reason: SplitReason::Handover,
                            capacity: None,
                        });
                        current = fog_b;
                    }
                    SplitOutcome::Refused => break,
                }
            }
        }
    }

    for (v, view) in snap.iter() {
        let Some(assoc) = view.association else { continue };
        if topology.fog_of(v).is_some() {
            continue;
        }
        let position = view.position;
        let nearest = topology
            .fogs
            .values()
            .filter(|f| f.base_station_id == assoc.base_station && !f.member_vehicle_ids.is_empty())
            .flat_map(|f| f.member_vehicle_ids.iter().map(move |&m| (f.id, m)))
            .map(|(f, m)| (distance(position, snap.position(m)), f))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match nearest {
            Some((_, fog)) => {
                topology.add_member(fog, v, snap)?;
                let granted = ledger.allocate_up_to(fog, params.units_per_member);
                let held = topology.fogs[&fog].allocated_units + granted;
                topology.set_allocated(fog, held);
            }
            None => {
                let (fog, units) = topology.create_fog(
                    ledger,
                    assoc.base_station,
                    [v].into(),
                    snap,
                    params.units_per_member,
                    now,
                );
                emit(FogEventKind::Create { fog, base_station: assoc.base_station, members: 1, units });
            }
        }
    }

    if params.split_merge {
        for id in topology.fog_ids() {
            let fog = &topology.fogs[&id];
            if fog.member_vehicle_ids.is_empty() {
                continue;
            }
            let positions = topology.member_positions(id, snap);
            let region = region_vehicle_count(infra, fog.base_station_id, snap.positions());
            let Some(reason) = fog_should_split(&positions, params.d_min, params.th_cap, region)? else {
                continue;
            };
            let capacity = fog_capacity(positions.len(), region)?;
            match topology.split_fog(ledger, id, snap, now)? {
                SplitOutcome::Split { fog_a, fog_b } => emit(FogEventKind::Split {
                    fog: id,
                    into: (fog_a, fog_b),
                    reason,
                    capacity: Some(capacity),
                }),
                SplitOutcome::Refused => emit(FogEventKind::SplitRefused { fog: id, reason }),
            }
        }

        let stations: BTreeSet<BaseStationId> = topology.fogs.values().map(|f| f.base_station_id).collect();
        for bs in stations {
            let region = region_vehicle_count(infra, bs, snap.positions());
            'restart: loop {
                let under: Vec<FogId> = topology
                    .fogs
                    .values()
                    .filter(|f| f.base_station_id == bs && !f.member_vehicle_ids.is_empty())
                    .map(|f| f.id)
                    .collect();
                for (i, &a) in under.iter().enumerate() {
                    let pa = topology.member_positions(a, snap);
                    for &b in &under[i + 1..] {
                        let pb = topology.member_positions(b, snap);
                        if should_merge(&pa, &pb, params.d_min, params.th_cap, region)? {
                            let capacity = fog_capacity(pa.len() + pb.len(), region)?;
                            let into = topology.merge_fogs(ledger, &[a, b], snap, now)?;
                            emit(FogEventKind::Merge { fogs: vec![a, b], into, capacity });
                            continue 'restart;
                        }
                    }
                }
                break;
            }
        }
    }

    for id in topology.fog_ids() {
        if topology.fogs[&id].member_vehicle_ids.is_empty() {
            match topology.destroy_fog(ledger, id) {
                Ok(released_units) => emit(FogEventKind::Destroy { fog: id, released_units }),
                Err(FogError::PendingMessages { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(())
}

/// Destroys every fog whose messages have all been resolved.
pub fn destroy_idle(
    topology: &mut FogTopology,
    ledger: &mut ResourceLedger,
    now: f64,
    events: &mut Vec<FogEvent>,
) {
    for id in topology.fog_ids() {
        if let Ok(released_units) = topology.destroy_fog(ledger, id) {
            events.push(FogEvent { time: now, kind: FogEventKind::Destroy { fog: id, released_units } });
        }
    }
}

/// Initial fogs: one per base station holding every vehicle associated
/// with it.
pub fn create_initial_fogs(
    topology: &mut FogTopology,
    ledger: &mut ResourceLedger,
    snap: &Snapshot,
    units_per_member: u64,
    now: f64,
    events: &mut Vec<FogEvent>,
) {
    let mut by_bs: BTreeMap<BaseStationId, BTreeSet<VehicleId>> = BTreeMap::new();
    for (v, view) in snap.iter() {
        if let Some(a) = view.association {
            by_bs.entry(a.base_station).or_default().insert(v);
        }
    }
    for (bs, members) in by_bs {
        let n = members.len();
        let (fog, units) = topology.create_fog(ledger, bs, members, snap, units_per_member, now);
        events.push(FogEvent {
            time: now,
            kind: FogEventKind::Create { fog, base_station: bs, members: n, units },
        });
    }
}
