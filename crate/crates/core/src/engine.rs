//! Fixed-tick simulation loop.
//!
//! Tick `n` covers the window `[t_n - dt, t_n)`. Its phases run in a fixed
//! order: mobility, association, orchestration, traffic generation,
//! dissemination, radio resolution, TTL expiry and event-log append.
//! Transmissions are registered when a route is planned and judged once no
//! later transmission can overlap them.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use tracing::{debug, trace};

use crate::config::{validate_config, ProtocolKind, Scenario, SimConfig};
use crate::dissemination::{DelayModel, ProtocolState, RoutingContext};
use crate::error::SimError;
use crate::fog::{
    associate, create_initial_fogs, destroy_idle, orchestrate, Association, FogEvent, FogTopology,
    OrchestrationParams, ResourceLedger, Snapshot,
};
use crate::metrics::{compute_report, ReceptionTally, RunLog, RunReport};
use crate::mobility::{step_highway, step_urban, MobilityState};
use crate::model::{Direction, Infrastructure, Message, MessageId, NodeRef, Point, Vehicle, VehicleId};
use crate::radio::{outcome_at, slot_of, slot_span, Outcome, Transmission};
use crate::rng::{stream, SimRng};
use crate::trace::{lane_at, position_at, TraceTimeline};

/// RSU spacing along the road.
pub const RSU_SPACING_M: f64 = 250.0;
/// One base station per road segment of this length.
pub const BASE_STATION_SPACING_M: f64 = 500.0;
/// Resource units granted per fog member.
pub const UNITS_PER_MEMBER: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
enum TaskState {
    Waiting { at: f64 },
    InFlight,
    Delivered,
    Dropped,
}

/// Delivery of one message to one recipient.
#[derive(Debug, Clone, PartialEq)]
struct Task {
    message: MessageId,
    recipient: VehicleId,
    attempts: u32,
    state: TaskState,
}

#[derive(Debug, Clone, PartialEq)]
struct Attempt {
    task: usize,
    start: f64,
    delay: f64,
    hops: u32,
    remaining: u32,
    failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Listener {
    receiver: NodeRef,
    position: Point,
    attempt: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct AirTx {
    tx: Transmission,
    listeners: Vec<Listener>,
    finalized: bool,
}

/// Complete simulation state.
#[derive(Debug, Clone)]
pub struct World {
    config: SimConfig,
    infra: Infrastructure,
    mobility: MobilityState,
    trace: Option<TraceTimeline>,
    topology: FogTopology,
    ledger: ResourceLedger,
    protocol: ProtocolState,
    associations: BTreeMap<VehicleId, Association>,
    snapshot: Snapshot,
    delay_model: DelayModel,
    slot_span: u32,
    tick_index: u64,
    time: f64,
    rng_mobility: SimRng,
    rng_traffic: SimRng,
    rng_retry: SimRng,
    messages: Vec<Message>,
    unresolved: Vec<u32>,
    tasks: Vec<Task>,
    attempts: Vec<Attempt>,
    air: BTreeMap<(i64, NodeRef, MessageId), AirTx>,
    events: Vec<FogEvent>,
    receptions: ReceptionTally,
    attempt_count: u64,
    successful_attempts: u64,
    fog_size_sum: f64,
    fog_size_samples: u64,
}

/// Report plus the raw log it was computed from.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub log: RunLog,
}

fn vehicle_from_trace(timeline: &TraceTimeline, id: VehicleId, t: f64) -> Result<Vehicle, SimError> {
    let (start, end) = timeline.span(id).ok_or(crate::error::TraceError::UnknownVehicle(id))?;
    let (position, speed) = position_at(timeline, id, t.clamp(start, end))?;
    Ok(Vehicle {
        id,
        position,
        speed,
        cruise_speed: speed,
        lane: lane_at(timeline, id, t).unwrap_or(0),
        direction: Direction::Forward,
        buffer: Vec::new(),
    })
}

/// Builds the initial world: validated config, infrastructure, vehicles
/// (spawned, or taken from a trace at t = 0) and the initial fogs.
pub fn init_world(config: SimConfig, trace: Option<TraceTimeline>) -> Result<World, SimError> {
    let config = validate_config(config)?;
    match trace {
        Some(timeline) => {
            if timeline.vehicle_count() != config.vehicle_count as usize {
                return Err(SimError::VehicleCountMismatch {
                    trace: timeline.vehicle_count(),
                    config: config.vehicle_count,
                });
            }
            let vehicles = (0..config.vehicle_count)
                .map(|i| vehicle_from_trace(&timeline, VehicleId(i), 0.0))
                .collect::<Result<Vec<_>, _>>()?;
            let mobility = MobilityState { vehicles, current_time: 0.0, road: config.road_bounds() };
            World::assemble(config, mobility, Some(timeline))
        }
        None => {
            let mobility = MobilityState::spawn(&config, &mut stream(config.seed, "placement"))?;
            World::assemble(config, mobility, None)
        }
    }
}

impl World {
    /// World with an explicit vehicle layout (dense ids `0..n`).
    pub fn with_vehicles(config: SimConfig, vehicles: Vec<Vehicle>) -> Result<World, SimError> {
        let config = validate_config(config)?;
        for (i, v) in vehicles.iter().enumerate() {
            if v.id != VehicleId(i as u32) {
                return Err(crate::error::ModelError::SparseId(v.id.to_string()).into());
            }
        }
        let mobility = MobilityState::new(vehicles, config.road_bounds())?;
        World::assemble(config, mobility, None)
    }

    fn assemble(config: SimConfig, mobility: MobilityState, trace: Option<TraceTimeline>) -> Result<World, SimError> {
        let infra = Infrastructure::along_road(
            config.road_length_m,
            RSU_SPACING_M,
            BASE_STATION_SPACING_M,
            config.transmission_range_m,
        )?;
        let associations = associate(&mobility.vehicles, &infra);
        let snapshot = Snapshot::new(&mobility.vehicles, &associations);
        let mut topology = FogTopology::new();
        let mut ledger = ResourceLedger::new(config.resource_pool_units);
        let mut events = Vec::new();
        let protocol = match config.protocol {
            ProtocolKind::CloudOnly => ProtocolState::CloudOnly,
            kind => {
                create_initial_fogs(&mut topology, &mut ledger, &snapshot, UNITS_PER_MEMBER, 0.0, &mut events);
                if kind == ProtocolKind::Dfcv {
                    ProtocolState::Dfcv
                } else {
                    let frozen = mobility
                        .vehicles
                        .iter()
                        .map(|v| topology.fog_of(v.id).and_then(|f| topology.fog(f)).map(|f| f.base_station_id))
                        .collect();
                    ProtocolState::StaticFog(frozen)
                }
            }
        };
        let delay_model = DelayModel::from_config(&config);
        let seed = config.seed;
        let world = World {
            slot_span: slot_span(delay_model.transmission_time_s, config.slot_duration_s),
            delay_model,
            infra,
            mobility,
            trace,
            topology,
            ledger,
            protocol,
            associations,
            snapshot,
            tick_index: 0,
            time: 0.0,
            rng_mobility: stream(seed, "mobility"),
            rng_traffic: stream(seed, "traffic"),
            rng_retry: stream(seed, "retry"),
            messages: Vec::new(),
            unresolved: Vec::new(),
            tasks: Vec::new(),
            attempts: Vec::new(),
            air: BTreeMap::new(),
            events,
            receptions: ReceptionTally::default(),
            attempt_count: 0,
            successful_attempts: 0,
            fog_size_sum: 0.0,
            fog_size_samples: 0,
            config,
        };
        world.check_invariants()?;
        Ok(world)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn tick_index(&self) -> u64 {
        self.tick_index
    }

    pub fn infrastructure(&self) -> &Infrastructure {
        &self.infra
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.mobility.vehicles
    }

    pub fn associations(&self) -> &BTreeMap<VehicleId, Association> {
        &self.associations
    }

    pub fn snapshot(&self) -> &Snapshot {
        &self.snapshot
    }

    pub fn topology(&self) -> &FogTopology {
        &self.topology
    }

    pub fn ledger(&self) -> &ResourceLedger {
        &self.ledger
    }

    pub fn events(&self) -> &[FogEvent] {
        &self.events
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn receptions(&self) -> ReceptionTally {
        self.receptions
    }

    /// Undelivered tasks or unjudged transmissions remain.
    pub fn has_pending(&self) -> bool {
        self.tasks.iter().any(|t| matches!(t.state, TaskState::Waiting { .. } | TaskState::InFlight))
            || self.air.values().any(|a| !a.finalized)
    }

    fn check_invariants(&self) -> Result<(), SimError> {
        let fail = |detail: String| Err(SimError::Invariant { time: self.time, detail });
        if let Err(detail) = self.topology.check_consistency(&self.ledger) {
            return fail(detail);
        }
        if self.ledger.remaining() + self.ledger.allocated_total() != self.ledger.total_pool() {
            return fail("resource pool not conserved".into());
        }
        if let Some(e) = self.events.iter().find(|e| e.kind.capacity().is_some_and(|c| !(0.0..=1.0).contains(&c))) {
            return fail(format!("capacity outside [0, 1] in {}", e.kind));
        }
        Ok(())
    }

    fn move_vehicles(&mut self) -> Result<(), SimError> {
        let dt = self.config.tick_s;
        match &self.trace {
            Some(timeline) => {
                let t = self.time + dt;
                for v in &mut self.mobility.vehicles {
                    let next = vehicle_from_trace(timeline, v.id, t)?;
                    v.position = next.position;
                    v.speed = next.speed;
                    v.lane = next.lane;
                }
                self.mobility.current_time = t;
            }
            None => match self.config.scenario {
                Scenario::Highway => step_highway(&mut self.mobility, dt, &mut self.rng_mobility),
                Scenario::Urban => step_urban(&mut self.mobility, dt, &mut self.rng_mobility, false),
            },
        }
        self.time = self.tick_index as f64 * dt + dt;
        Ok(())
    }

    fn generate_traffic(&mut self, window_start: f64) -> Result<(), SimError> {
        let n = self.mobility.vehicles.len() as u32;
        let lambda = self.config.message_generation_rate * self.config.tick_s;
        if n < 2 || lambda <= 0.0 {
            return Ok(());
        }
        let poisson = Poisson::new(lambda).expect("positive rate");
        let k = self.config.recipients_per_message.min(n - 1) as usize;
        let mut fresh = Vec::new();
        for sender in 0..n {
            let count = poisson.sample(&mut self.rng_traffic) as u64;
            for _ in 0..count {
                let at = window_start + self.rng_traffic.random::<f64>() * self.config.tick_s;
                let recipients = sample(&mut self.rng_traffic, (n - 1) as usize, k)
                    .into_iter()
                    .map(|i| {
                        let i = i as u32;
                        VehicleId(if i >= sender { i + 1 } else { i })
                    })
                    .collect();
                fresh.push((at, VehicleId(sender), recipients));
            }
        }
        fresh.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (at, sender, recipients) in fresh {
            let id = MessageId(self.messages.len() as u64);
            let message = Message::new(id, sender, recipients, self.config.message_size_bytes, at)?;
            for &r in &message.recipient_ids {
                self.tasks.push(Task { message: id, recipient: r, attempts: 0, state: TaskState::Waiting { at } });
            }
            self.unresolved.push(message.recipient_ids.len() as u32);
            self.mobility.vehicles[sender.0 as usize].buffer.push(id);
            self.messages.push(message);
        }
        Ok(())
    }

    fn node_position(&self, node: NodeRef) -> Point {
        match node {
            NodeRef::Vehicle(v) => self.snapshot.position(v),
            NodeRef::Rsu(r) => self.infra.rsu(r).position,
            NodeRef::BaseStation(b) => self.infra.base_station(b).position,
            NodeRef::Cloud => Point::default(),
        }
    }

    fn node_range(&self, node: NodeRef) -> f64 {
        match node {
            NodeRef::Rsu(r) => self.infra.rsu(r).range,
            _ => self.config.transmission_range_m,
        }
    }

    fn disseminate(&mut self, window_end: f64) {
        let mut due: Vec<(f64, usize)> = self
            .tasks
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match t.state {
                TaskState::Waiting { at } if at < window_end => Some((at, i)),
                _ => None,
            })
            .collect();
        due.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let positions: Vec<(VehicleId, Point)> = self.mobility.vehicles.iter().map(|v| (v.id, v.position)).collect();
        for (at, task_idx) in due {
            let (message_id, recipient) = (self.tasks[task_idx].message, self.tasks[task_idx].recipient);
            let sender = self.messages[message_id.0 as usize].sender_id;
            let ctx = RoutingContext {
                infra: &self.infra,
                snapshot: &self.snapshot,
                vehicles: &positions,
                range: self.config.transmission_range_m,
            };
            let plan = self.protocol.plan(&ctx, &self.topology, message_id, sender, recipient);
            self.attempt_count += 1;
            let task = &mut self.tasks[task_idx];
            task.attempts += 1;
            let Some(plan) = plan else {
                trace!(%message_id, %recipient, "no route");
                task.state = TaskState::InFlight;
                self.fail_attempt(task_idx, window_end);
                continue;
            };
            task.state = TaskState::InFlight;
            for v in [sender, recipient] {
                if let Some(fog) = self.topology.fog_of(v) {
                    self.topology.note_routed(fog, message_id);
                }
            }
            let attempt_idx = self.attempts.len();
            let mut airborne = 0;
            for (leg, timing) in plan.legs.iter().zip(plan.timings(&self.delay_model)) {
                let Some(transmitter) = leg.transmitter() else { continue };
                airborne += 1;
                let start_slot = slot_of(at + timing.offset_s, self.config.slot_duration_s);
                let listener = Listener { receiver: leg.to, position: self.node_position(leg.to), attempt: attempt_idx };
                let tx = Transmission {
                    transmitter,
                    origin: self.node_position(transmitter),
                    range: self.node_range(transmitter),
                    message_id,
                    start_slot,
                    slot_span: self.slot_span,
                };
                self.air
                    .entry((start_slot, transmitter, message_id))
                    .or_insert_with(|| AirTx { tx, listeners: Vec::new(), finalized: false })
                    .listeners
                    .push(listener);
            }
            self.attempts.push(Attempt {
                task: task_idx,
                start: at,
                delay: plan.total_delay(&self.delay_model),
                hops: plan.hop_count(),
                remaining: airborne,
                failed: false,
            });
            if airborne == 0 {
                self.finish_attempt(attempt_idx, window_end);
            }
        }
    }

    fn resolve_radio(&mut self, window_end: f64) -> Result<(), SimError> {
        let horizon = slot_of(window_end, self.config.slot_duration_s);
        let all: Vec<Transmission> = self.air.values().map(|a| a.tx).collect();
        let mut finished = Vec::new();
        for (i, air) in self.air.values_mut().enumerate() {
            if air.finalized || air.tx.end_slot() > horizon {
                continue;
            }
            air.finalized = true;
            for l in &air.listeners {
                let outcome = outcome_at(&all, i, l.receiver, l.position);
                match outcome {
                    Outcome::Delivered => self.receptions.delivered += 1,
                    Outcome::Collided => self.receptions.collided += 1,
                    Outcome::OutOfRange => self.receptions.out_of_range += 1,
                }
                let attempt = &mut self.attempts[l.attempt];
                attempt.remaining -= 1;
                attempt.failed |= outcome != Outcome::Delivered;
                if attempt.remaining == 0 {
                    finished.push(l.attempt);
                }
            }
        }
        finished.sort_unstable();
        for a in finished {
            self.finish_attempt(a, window_end);
        }
        let oldest_open = self.air.values().filter(|a| !a.finalized).map(|a| a.tx.start_slot).min();
        self.air.retain(|_, a| !a.finalized || oldest_open.is_some_and(|s| a.tx.end_slot() > s));
        let causality = self.messages.iter().find(|m| m.delivered_at.values().any(|&at| at < m.created_at));
        if let Some(m) = causality {
            return Err(SimError::Invariant { time: self.time, detail: format!("{} delivered before creation", m.id) });
        }
        Ok(())
    }

    fn finish_attempt(&mut self, attempt_idx: usize, window_end: f64) {
        let attempt = self.attempts[attempt_idx].clone();
        if attempt.failed {
            self.fail_attempt(attempt.task, window_end);
            return;
        }
        self.successful_attempts += 1;
        let task = &mut self.tasks[attempt.task];
        task.state = TaskState::Delivered;
        let (message, recipient) = (task.message, task.recipient);
        self.messages[message.0 as usize]
            .record_delivery(recipient, attempt.start + attempt.delay, attempt.hops)
            .expect("recipient belongs to the message and delivery follows creation");
        self.resolve_task(message);
    }

    fn fail_attempt(&mut self, task_idx: usize, window_end: f64) {
        let task = &mut self.tasks[task_idx];
        if task.attempts < self.config.max_attempts {
            let at = window_end + self.rng_retry.random::<f64>() * self.config.tick_s;
            task.state = TaskState::Waiting { at };
        } else {
            task.state = TaskState::Dropped;
            let message = task.message;
            self.resolve_task(message);
        }
    }

    fn resolve_task(&mut self, message: MessageId) {
        let left = &mut self.unresolved[message.0 as usize];
        *left -= 1;
        if *left == 0 {
            self.topology.note_resolved(message);
            let sender = self.messages[message.0 as usize].sender_id;
            self.mobility.vehicles[sender.0 as usize].buffer.retain(|m| *m != message);
        }
    }

    fn expire(&mut self) {
        let ttl = self.config.message_ttl_s;
        let mut expired = Vec::new();
        for task in &mut self.tasks {
            if let TaskState::Waiting { at } = task.state {
                if at - self.messages[task.message.0 as usize].created_at > ttl {
                    task.state = TaskState::Dropped;
                    expired.push(task.message);
                }
            }
        }
        for m in expired {
            self.resolve_task(m);
        }
    }

    /// Advances the world by one tick.
    pub fn tick(&mut self) -> Result<(), SimError> {
        let dt = self.config.tick_s;
        // 1. mobility
        self.move_vehicles()?;
        self.tick_index += 1;
        let window_end = self.time;
        let window_start = window_end - dt;
        // 2. association
        self.associations = associate(&self.mobility.vehicles, &self.infra);
        self.snapshot = Snapshot::new(&self.mobility.vehicles, &self.associations);
        // 3. orchestration
        let mut tick_events = Vec::new();
        if self.protocol.kind() == ProtocolKind::Dfcv {
            let params = OrchestrationParams {
                d_min: self.config.d_min_m,
                th_cap: self.config.th_cap,
                split_merge: self.config.orchestration,
                units_per_member: UNITS_PER_MEMBER,
            };
            orchestrate(
                &mut self.topology,
                &mut self.ledger,
                &self.snapshot,
                &self.infra,
                &params,
                self.time,
                &mut tick_events,
            )
            .map_err(|e| SimError::Invariant { time: self.time, detail: e.to_string() })?;
        }
        for fog in self.topology.fogs().filter(|f| !f.member_vehicle_ids.is_empty()) {
            self.fog_size_sum += fog.member_vehicle_ids.len() as f64;
            self.fog_size_samples += 1;
        }
        // 4. traffic
        if window_end <= self.config.sim_duration_s + 1e-9 {
            self.generate_traffic(window_start)?;
        }
        // 5. dissemination
        self.disseminate(window_end);
        // 6. radio resolution
        self.resolve_radio(window_end)?;
        // 7. TTL expiry
        self.expire();
        // 8. event log
        if !tick_events.is_empty() {
            debug!(t = self.time, count = tick_events.len(), "fog events");
        }
        self.events.append(&mut tick_events);
        self.check_invariants()
    }

    /// Destroys every remaining fog once all traffic is resolved.
    pub fn finish(&mut self) {
        destroy_idle(&mut self.topology, &mut self.ledger, self.time, &mut self.events);
    }

    pub fn run_log(&self) -> RunLog {
        RunLog {
            protocol: self.config.protocol,
            scenario: self.config.scenario,
            vehicle_count: self.config.vehicle_count,
            seed: self.config.seed,
            max_attempts: self.config.max_attempts,
            messages: self.messages.clone(),
            events: self.events.clone(),
            receptions: self.receptions,
            attempts: self.attempt_count,
            successful_attempts: self.successful_attempts,
            mean_fog_size: (self.fog_size_samples > 0).then(|| self.fog_size_sum / self.fog_size_samples as f64),
        }
    }
}

/// Runs the traffic phase, drains outstanding deliveries, then destroys the
/// remaining fogs.
pub fn run_world(mut world: World) -> Result<RunOutput, SimError> {
    let dt = world.config.tick_s;
    let traffic_ticks = (world.config.sim_duration_s / dt + 1e-9).floor() as u64;
    for _ in 0..traffic_ticks {
        world.tick()?;
    }
    let drain_limit = ((world.config.message_ttl_s + 1.0) / dt).ceil() as u64 + 10;
    let mut drained = 0;
    while world.has_pending() {
        if drained == drain_limit {
            return Err(SimError::Invariant { time: world.time, detail: "deliveries never settled".into() });
        }
        world.tick()?;
        drained += 1;
    }
    world.finish();
    world.check_invariants()?;
    let log = world.run_log();
    Ok(RunOutput { report: compute_report(&log), log })
}

pub fn run(config: SimConfig, trace: Option<TraceTimeline>) -> Result<RunOutput, SimError> {
    run_world(init_world(config, trace)?)
}
