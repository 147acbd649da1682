//! Message routing for the dfcv protocol and the two baselines.
//!
//! Infrastructure routes run sender → RSU → base station → recipient. When
//! sender and recipient sit under different base stations the two stations
//! handshake and forward over the backhaul. The cloud-only baseline detours
//! every message through the cloud instead. When an end has no RSU in range
//! at all, dfcv and static-fog fall back to greedy multi-hop V2V forwarding.

use crate::config::{ProtocolKind, SimConfig};
use crate::fog::{nearest_rsu, Association, FogTopology, Snapshot};
use crate::model::{distance, BaseStationId, Infrastructure, MessageId, NodeRef, Point, RsuId, VehicleId};
use crate::radio::{in_range, transmission_time, LinkKind, LinkLatencies};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Leg {
    pub from: NodeRef,
    pub to: NodeRef,
    pub kind: LinkKind,
    /// RSU that puts a base station's downlink on the air.
    pub via: Option<RsuId>,
}

impl Leg {
    fn new(from: NodeRef, to: NodeRef, kind: LinkKind) -> Self {
        Self { from, to, kind, via: None }
    }

    /// Node whose radio carries this leg, for over-the-air legs.
    pub fn transmitter(&self) -> Option<NodeRef> {
        match self.kind {
            LinkKind::V2i => Some(self.via.map_or(self.from, NodeRef::Rsu)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    pub message_id: MessageId,
    pub recipient: VehicleId,
    pub legs: Vec<Leg>,
    pub handshakes: Vec<(BaseStationId, BaseStationId)>,
}

/// Per-leg timing of a plan: offset from the attempt start and duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegTiming {
    pub offset_s: f64,
    pub delay_s: f64,
}

/// Costs applied to every leg of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayModel {
    pub transmission_time_s: f64,
    pub latencies: LinkLatencies,
    pub handshake_delay_s: f64,
}

impl DelayModel {
    pub fn from_config(config: &SimConfig) -> Self {
        Self {
            transmission_time_s: transmission_time(u64::from(config.message_size_bytes), config.data_rate_bps),
            latencies: LinkLatencies::from_config(config),
            handshake_delay_s: config.handshake_delay_s,
        }
    }

    pub fn leg_delay(&self, kind: LinkKind) -> f64 {
        self.transmission_time_s + self.latencies.fixed(kind)
    }
}

impl RoutePlan {
    pub fn hop_count(&self) -> u32 {
        self.legs.len() as u32
    }

    /// Sum of leg delays plus one handshake delay per handshake.
    pub fn total_delay(&self, model: &DelayModel) -> f64 {
        let legs: f64 = self.legs.iter().map(|l| model.leg_delay(l.kind)).sum();
        legs + self.handshakes.len() as f64 * model.handshake_delay_s
    }

    /// Start offsets of each leg. Handshakes complete before the
    /// inter-station leg that follows them.
    pub fn timings(&self, model: &DelayModel) -> Vec<LegTiming> {
        let mut offset = 0.0;
        let mut pending_handshakes = self.handshakes.len();
        self.legs
            .iter()
            .map(|leg| {
                if pending_handshakes > 0
                    && matches!((leg.from, leg.to), (NodeRef::BaseStation(_), NodeRef::BaseStation(_)))
                {
                    offset += model.handshake_delay_s;
                    pending_handshakes -= 1;
                }
                let t = LegTiming { offset_s: offset, delay_s: model.leg_delay(leg.kind) };
                offset += t.delay_s;
                t
            })
            .collect()
    }

    /// True when consecutive legs share endpoints from sender to recipient.
    pub fn is_connected(&self, sender: VehicleId) -> bool {
        let mut at = NodeRef::Vehicle(sender);
        for leg in &self.legs {
            if leg.from != at {
                return false;
            }
            at = leg.to;
        }
        at == NodeRef::Vehicle(self.recipient)
    }
}

/// Greedy geographic forwarding. Each hop hands the message to the in-range
/// vehicle closest to the recipient that is strictly closer than the current
/// holder (lowest id on ties). Returns the relays between sender and
/// recipient, or `None` at a local maximum.
pub fn multi_hop_route(
    sender: VehicleId,
    recipient: VehicleId,
    vehicles: &[(VehicleId, Point)],
    range: f64,
) -> Option<Vec<VehicleId>> {
    let pos = |id: VehicleId| vehicles.iter().find(|(v, _)| *v == id).map(|(_, p)| *p);
    let target = pos(recipient)?;
    let mut holder = pos(sender)?;
    let mut relays = Vec::new();
    loop {
        if in_range(holder, target, range) {
            return Some(relays);
        }
        let here = distance(holder, target);
        let next = vehicles
            .iter()
            .filter(|(v, p)| *v != recipient && in_range(holder, *p, range) && distance(*p, target) < here)
            .min_by(|a, b| distance(a.1, target).total_cmp(&distance(b.1, target)).then(a.0.cmp(&b.0)))?;
        relays.push(next.0);
        holder = next.1;
    }
}

fn multi_hop_plan(
    message_id: MessageId,
    sender: VehicleId,
    recipient: VehicleId,
    vehicles: &[(VehicleId, Point)],
    range: f64,
) -> Option<RoutePlan> {
    let relays = multi_hop_route(sender, recipient, vehicles, range)?;
    let chain: Vec<VehicleId> =
        std::iter::once(sender).chain(relays).chain(std::iter::once(recipient)).collect();
    let legs = chain
        .windows(2)
        .map(|w| Leg::new(NodeRef::Vehicle(w[0]), NodeRef::Vehicle(w[1]), LinkKind::V2i))
        .collect();
    Some(RoutePlan { message_id, recipient, legs, handshakes: Vec::new() })
}

fn infrastructure_plan(
    message_id: MessageId,
    sender: (VehicleId, Association),
    recipient: (VehicleId, Association),
    through_cloud: bool,
) -> RoutePlan {
    let (s, sa) = sender;
    let (r, ra) = recipient;
    let (bs_s, bs_r) = (NodeRef::BaseStation(sa.base_station), NodeRef::BaseStation(ra.base_station));
    let mut legs = vec![
        Leg::new(NodeRef::Vehicle(s), NodeRef::Rsu(sa.rsu), LinkKind::V2i),
        Leg::new(NodeRef::Rsu(sa.rsu), bs_s, LinkKind::Backhaul),
    ];
    let mut handshakes = Vec::new();
    if through_cloud {
        legs.push(Leg::new(bs_s, bs_r, LinkKind::Cloud));
    } else if sa.base_station != ra.base_station {
        handshakes.push((sa.base_station, ra.base_station));
        legs.push(Leg::new(bs_s, bs_r, LinkKind::Backhaul));
    }
    legs.push(Leg { from: bs_r, to: NodeRef::Vehicle(r), kind: LinkKind::V2i, via: Some(ra.rsu) });
    RoutePlan { message_id, recipient: r, legs, handshakes }
}

/// Everything a protocol needs to route one (message, recipient) pair.
pub struct RoutingContext<'a> {
    pub infra: &'a Infrastructure,
    pub snapshot: &'a Snapshot,
    /// Vehicle positions in id order, for multi-hop relay selection.
    pub vehicles: &'a [(VehicleId, Point)],
    pub range: f64,
}

/// RSU of `bs` nearest to the vehicle, if any is in range.
fn attach_via(ctx: &RoutingContext<'_>, vehicle: VehicleId, bs: BaseStationId) -> Option<Association> {
    nearest_rsu(ctx.snapshot.position(vehicle), ctx.infra, |r| r.base_station_id == bs)
}

/// dfcv: each end reaches the infrastructure through its fog's base station.
pub fn dfcv_send(
    ctx: &RoutingContext<'_>,
    topology: &FogTopology,
    message_id: MessageId,
    sender: VehicleId,
    recipient: VehicleId,
) -> Option<RoutePlan> {
    let attach = |v: VehicleId| {
        let fog = topology.fog(topology.fog_of(v)?)?;
        attach_via(ctx, v, fog.base_station_id)
    };
    route_or_multi_hop(ctx, message_id, sender, recipient, attach(sender), attach(recipient))
}

/// static-fog: like dfcv but against the fog membership frozen at start.
pub fn static_fog_send(
    ctx: &RoutingContext<'_>,
    frozen: &[Option<BaseStationId>],
    message_id: MessageId,
    sender: VehicleId,
    recipient: VehicleId,
) -> Option<RoutePlan> {
    let attach = |v: VehicleId| frozen.get(v.0 as usize).copied().flatten().and_then(|bs| attach_via(ctx, v, bs));
    route_or_multi_hop(ctx, message_id, sender, recipient, attach(sender), attach(recipient))
}

/// cloud-only: nearest RSU at both ends and a cloud detour in between; no
/// V2V fallback.
pub fn cloud_only_send(
    ctx: &RoutingContext<'_>,
    message_id: MessageId,
    sender: VehicleId,
    recipient: VehicleId,
) -> Option<RoutePlan> {
    let sa = ctx.snapshot.get(sender).association?;
    let ra = ctx.snapshot.get(recipient).association?;
    Some(infrastructure_plan(message_id, (sender, sa), (recipient, ra), true))
}

/// Infrastructure route when both ends are attached. Multi-hop only
/// applies when an end has no RSU in range at all; an end that is
/// associated but cut off from its fog's base station is unreachable.
fn route_or_multi_hop(
    ctx: &RoutingContext<'_>,
    message_id: MessageId,
    sender: VehicleId,
    recipient: VehicleId,
    sa: Option<Association>,
    ra: Option<Association>,
) -> Option<RoutePlan> {
    if let (Some(sa), Some(ra)) = (sa, ra) {
        return Some(infrastructure_plan(message_id, (sender, sa), (recipient, ra), false));
    }
    let unassociated = |v: VehicleId| ctx.snapshot.get(v).association.is_none();
    if unassociated(sender) || unassociated(recipient) {
        multi_hop_plan(message_id, sender, recipient, ctx.vehicles, ctx.range)
    } else {
        None
    }
}

/// Routing state that differs between protocols.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolState {
    Dfcv,
    /// Base station of each vehicle's initial fog, indexed by vehicle id.
    StaticFog(Vec<Option<BaseStationId>>),
    CloudOnly,
}

impl ProtocolState {
    pub fn kind(&self) -> ProtocolKind {
        match self {
            ProtocolState::Dfcv => ProtocolKind::Dfcv,
            ProtocolState::StaticFog(_) => ProtocolKind::StaticFog,
            ProtocolState::CloudOnly => ProtocolKind::CloudOnly,
        }
    }

    pub fn plan(
        &self,
        ctx: &RoutingContext<'_>,
        topology: &FogTopology,
        message_id: MessageId,
        sender: VehicleId,
        recipient: VehicleId,
    ) -> Option<RoutePlan> {
        match self {
            ProtocolState::Dfcv => dfcv_send(ctx, topology, message_id, sender, recipient),
            ProtocolState::StaticFog(frozen) => static_fog_send(ctx, frozen, message_id, sender, recipient),
            ProtocolState::CloudOnly => cloud_only_send(ctx, message_id, sender, recipient),
        }
    }
}
