//! Synthetic vehicle motion on a wrapped multi-lane road.
//!
//! Each vehicle keeps the cruise speed drawn at spawn and applies a
//! symmetric ±5% jitter every step. Vehicles leaving one end of the road
//! re-enter at the other, so density stays constant for the whole run.

use rand::Rng;

use crate::config::{Scenario, SimConfig};
use crate::error::ModelError;
use crate::model::{Direction, RoadBounds, Vehicle, VehicleId};
use crate::rng::SimRng;

/// Relative per-step speed jitter around the cruise speed.
pub const SPEED_JITTER: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityState {
    pub vehicles: Vec<Vehicle>,
    pub current_time: f64,
    pub road: RoadBounds,
}

/// Lanes below this index carry forward traffic in the urban scenario.
pub fn forward_lane_count(lane_count: u32) -> u32 {
    lane_count.div_ceil(2)
}

pub fn urban_direction(lane: u32, lane_count: u32) -> Direction {
    if lane < forward_lane_count(lane_count) {
        Direction::Forward
    } else {
        Direction::Backward
    }
}

/// Speed band vehicles are spawned in: the full band on the highway, its
/// lower half in town.
pub fn spawn_speed_band(config: &SimConfig) -> (f64, f64) {
    let (min, max) = config.speed_band_mps();
    match config.scenario {
        Scenario::Highway => (min, max),
        Scenario::Urban => (min, (min + max) / 2.0),
    }
}

/// Moves `x` by `signed_displacement` on a road of length `road_length`
/// that wraps at both ends.
pub fn wrap_advance(x: f64, signed_displacement: f64, road_length: f64) -> f64 {
    let next = (x + signed_displacement).rem_euclid(road_length);
    // rem_euclid can round a tiny negative up to exactly `road_length`.
    if next >= road_length {
        0.0
    } else {
        next
    }
}

impl MobilityState {
    pub fn new(vehicles: Vec<Vehicle>, road: RoadBounds) -> Result<Self, ModelError> {
        for v in &vehicles {
            v.check(&road)?;
        }
        Ok(Self { vehicles, current_time: 0.0, road })
    }

    /// Places `config.vehicle_count` vehicles uniformly at random along the
    /// lanes with cruise speeds from the scenario's band.
    pub fn spawn(config: &SimConfig, rng: &mut SimRng) -> Result<Self, ModelError> {
        let road = config.road_bounds();
        let (lo, hi) = spawn_speed_band(config);
        let vehicles = (0..config.vehicle_count)
            .map(|i| {
                let x = rng.random_range(0.0..config.road_length_m);
                let lane = rng.random_range(0..config.lane_count);
                let speed = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                let direction = match config.scenario {
                    Scenario::Highway => Direction::Forward,
                    Scenario::Urban => urban_direction(lane, config.lane_count),
                };
                Vehicle::new(VehicleId(i), x, lane, direction, speed, &road)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(vehicles, road)
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&Vehicle> {
        // Ids are dense in spawn order; fall back to a scan for custom layouts.
        match self.vehicles.get(id.0 as usize) {
            Some(v) if v.id == id => Some(v),
            _ => self.vehicles.iter().find(|v| v.id == id),
        }
    }

    fn advance(&mut self, dt: f64, rng: &mut SimRng, force_forward: bool) {
        assert!(dt > 0.0, "mobility step requires dt > 0, got {dt}");
        let road = self.road;
        for v in &mut self.vehicles {
            let jitter = rng.random_range(-SPEED_JITTER..=SPEED_JITTER);
            v.speed = (v.cruise_speed * (1.0 + jitter)).clamp(road.min_speed_mps, road.max_speed_mps);
            let sign = if force_forward { 1.0 } else { v.direction.sign() };
            v.position.x = wrap_advance(v.position.x, sign * v.speed * dt, road.length_m);
        }
        self.current_time += dt;
    }
}

/// Advances every vehicle forward by one step of `dt` seconds.
///
/// Panics when `dt <= 0`.
pub fn step_highway(state: &mut MobilityState, dt: f64, rng: &mut SimRng) {
    state.advance(dt, rng, true);
}

/// Advances vehicles along their lane's direction. With `all_forward` set
/// every vehicle moves forward and the step matches [`step_highway`].
///
/// Panics when `dt <= 0`.
pub fn step_urban(state: &mut MobilityState, dt: f64, rng: &mut SimRng, all_forward: bool) {
    state.advance(dt, rng, all_forward);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lane_y, mph_to_mps};
    use crate::rng::stream;

    fn fixed_speed_state(x: f64, lane: u32, direction: Direction, speed: f64) -> MobilityState {
        let road = RoadBounds {
            length_m: 1000.0,
            lane_count: 4,
            min_speed_mps: speed,
            max_speed_mps: speed,
        };
        let v = Vehicle::new(VehicleId(0), x, lane, direction, speed, &road).unwrap();
        MobilityState::new(vec![v], road).unwrap()
    }

    #[test]
    fn highway_wraps_at_road_end() {
        assert_eq!(wrap_advance(990.0, 20.0, 1000.0), 10.0);
        let mut s = fixed_speed_state(990.0, 0, Direction::Forward, 20.0);
        step_highway(&mut s, 1.0, &mut stream(1, "t"));
        assert!((s.vehicles[0].position.x - 10.0).abs() < 1e-9);
        assert_eq!(s.vehicles[0].lane, 0);
        assert_eq!(s.current_time, 1.0);
    }

    #[test]
    fn urban_backward_wraps_at_zero() {
        assert_eq!(wrap_advance(5.0, -10.0, 1000.0), 995.0);
        let mut s = fixed_speed_state(5.0, 2, Direction::Backward, 10.0);
        step_urban(&mut s, 1.0, &mut stream(1, "t"), false);
        assert!((s.vehicles[0].position.x - 995.0).abs() < 1e-9);
        assert_eq!(s.vehicles[0].position.y, lane_y(2));
    }

    #[test]
    #[should_panic(expected = "dt > 0")]
    fn zero_dt_rejected() {
        let mut s = fixed_speed_state(5.0, 0, Direction::Forward, 10.0);
        step_highway(&mut s, 0.0, &mut stream(1, "t"));
    }

    #[test]
    fn four_lane_direction_convention() {
        let dirs: Vec<_> = (0..4).map(|l| urban_direction(l, 4)).collect();
        assert_eq!(
            dirs,
            vec![Direction::Forward, Direction::Forward, Direction::Backward, Direction::Backward]
        );
    }

    #[test]
    fn urban_spawns_in_lower_half_of_band() {
        let config = SimConfig { vehicle_count: 200, ..SimConfig::default() };
        let s = MobilityState::spawn(&config, &mut stream(3, "mobility")).unwrap();
        let mid = (mph_to_mps(30.0) + mph_to_mps(65.0)) / 2.0;
        assert!(s.vehicles.iter().all(|v| v.cruise_speed <= mid));
        assert!(s.vehicles.iter().any(|v| v.direction == Direction::Backward));
    }

    #[test]
    fn urban_with_override_matches_highway() {
        let config = SimConfig { vehicle_count: 50, ..SimConfig::default() };
        let spawned = MobilityState::spawn(&config, &mut stream(9, "mobility")).unwrap();
        let mut a = spawned.clone();
        let mut b = spawned;
        let mut ra = stream(9, "step");
        let mut rb = stream(9, "step");
        for _ in 0..50 {
            step_highway(&mut a, 0.1, &mut ra);
            step_urban(&mut b, 0.1, &mut rb, true);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let config = SimConfig { vehicle_count: 80, scenario: Scenario::Highway, ..SimConfig::default() };
        let run = || {
            let mut rng = stream(42, "mobility");
            let mut s = MobilityState::spawn(&config, &mut rng).unwrap();
            let mut trajectory = Vec::new();
            for _ in 0..100 {
                step_highway(&mut s, 0.1, &mut rng);
                trajectory.extend(s.vehicles.iter().map(|v| v.position.x.to_bits()));
            }
            trajectory
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn invariants_hold_over_many_steps() {
        for scenario in [Scenario::Urban, Scenario::Highway] {
            let config = SimConfig { vehicle_count: 120, scenario, ..SimConfig::default() };
            let mut rng = stream(5, "mobility");
            let mut s = MobilityState::spawn(&config, &mut rng).unwrap();
            for _ in 0..500 {
                let before: Vec<(f64, f64)> =
                    s.vehicles.iter().map(|v| (v.position.x, v.direction.sign())).collect();
                if scenario == Scenario::Highway {
                    step_highway(&mut s, 0.1, &mut rng);
                } else {
                    step_urban(&mut s, 0.1, &mut rng, false);
                }
                assert_eq!(s.vehicles.len(), 120);
                for (v, (x0, sign)) in s.vehicles.iter().zip(before) {
                    v.check(&s.road).unwrap();
                    let expected = wrap_advance(x0, sign * v.speed * 0.1, 1000.0);
                    assert!((v.position.x - expected).abs() < 1e-9);
                }
            }
        }
    }
}
