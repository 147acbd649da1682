//! Floating-car-data traces: CSV ingestion, validation and interpolation.
//!
//! Expected layout (UTF-8, decimal point):
//!
//! ```text
//! time_s,vehicle_id,x_m,y_m,speed_mps,lane
//! 0.0,7,12.5,3.5,20.0,1
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::TraceError;
use crate::model::{Point, RoadBounds, VehicleId};

pub const TRACE_HEADER: [&str; 6] = ["time_s", "vehicle_id", "x_m", "y_m", "speed_mps", "lane"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub time_s: f64,
    pub vehicle_id: VehicleId,
    pub position: Point,
    pub speed_mps: f64,
    pub lane: u32,
}

/// Validated samples keyed by dense vehicle ids (`0..n` in ascending order
/// of the ids found in the file).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTimeline {
    per_vehicle: BTreeMap<VehicleId, Vec<TraceSample>>,
    original_ids: Vec<u64>,
}

impl TraceTimeline {
    pub fn vehicle_count(&self) -> usize {
        self.per_vehicle.len()
    }

    pub fn sample_count(&self) -> usize {
        self.per_vehicle.values().map(Vec::len).sum()
    }

    /// Id used in the source file for a normalized vehicle.
    pub fn original_id(&self, vehicle: VehicleId) -> Option<u64> {
        self.original_ids.get(vehicle.0 as usize).copied()
    }

    pub fn samples(&self, vehicle: VehicleId) -> Option<&[TraceSample]> {
        self.per_vehicle.get(&vehicle).map(Vec::as_slice)
    }

    pub fn span(&self, vehicle: VehicleId) -> Option<(f64, f64)> {
        let s = self.per_vehicle.get(&vehicle)?;
        Some((s.first()?.time_s, s.last()?.time_s))
    }

    /// All samples ordered by time, then vehicle.
    pub fn sorted_samples(&self) -> Vec<TraceSample> {
        let mut all: Vec<TraceSample> = self.per_vehicle.values().flatten().copied().collect();
        all.sort_by(|a, b| a.time_s.total_cmp(&b.time_s).then(a.vehicle_id.cmp(&b.vehicle_id)));
        all
    }
}

pub fn load_trace(path: impl AsRef<Path>, road: &RoadBounds) -> Result<TraceTimeline, TraceError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TraceError::Io { path: path.to_owned(), source })?;
    parse_trace(file, road)
}

pub fn parse_trace(reader: impl Read, road: &RoadBounds) -> Result<TraceTimeline, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| TraceError::Malformed { line: 1, reason: e.to_string() })?
        .clone();
    if header.is_empty() {
        return Err(TraceError::Empty);
    }
    if header.iter().ne(TRACE_HEADER) {
        return Err(TraceError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }

    // Raw samples keyed by file id; normalized once all ids are known.
    let mut raw: BTreeMap<u64, Vec<(TraceSample, u64)>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| TraceError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |reason: String| TraceError::Malformed { line, reason };
        if record.len() != TRACE_HEADER.len() {
            return Err(malformed(format!("expected 6 fields, found {}", record.len())));
        }
        let float = |i: usize| -> Result<f64, TraceError> {
            let v: f64 = record[i]
                .parse()
                .map_err(|_| malformed(format!("{} `{}` is not a number", TRACE_HEADER[i], &record[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(malformed(format!("{} is not finite", TRACE_HEADER[i])))
            }
        };
        let time_s = float(0)?;
        let vehicle: u64 = record[1]
            .parse()
            .map_err(|_| malformed(format!("vehicle_id `{}` is not an integer", &record[1])))?;
        let x = float(2)?;
        let y = float(3)?;
        let speed = float(4)?;
        let lane: u32 = record[5]
            .parse()
            .map_err(|_| malformed(format!("lane `{}` is not an integer", &record[5])))?;
        if speed < 0.0 || time_s < 0.0 {
            return Err(malformed("negative time or speed".into()));
        }
        if !(0.0..=road.length_m).contains(&x) || lane >= road.lane_count {
            return Err(TraceError::OutOfBounds { vehicle, line });
        }
        let samples = raw.entry(vehicle).or_default();
        if let Some((last, _)) = samples.last() {
            if time_s <= last.time_s {
                return Err(TraceError::NonMonotonic { vehicle, time: time_s, line });
            }
        }
        let sample = TraceSample {
            time_s,
            vehicle_id: VehicleId(0),
            position: Point::new(x, y),
            speed_mps: speed,
            lane,
        };
        samples.push((sample, line));
    }
    if raw.is_empty() {
        return Err(TraceError::Empty);
    }

    let mut per_vehicle = BTreeMap::new();
    let mut original_ids = Vec::with_capacity(raw.len());
    for (dense, (original, samples)) in raw.into_iter().enumerate() {
        let id = VehicleId(dense as u32);
        original_ids.push(original);
        per_vehicle.insert(
            id,
            samples.into_iter().map(|(s, _)| TraceSample { vehicle_id: id, ..s }).collect(),
        );
    }
    Ok(TraceTimeline { per_vehicle, original_ids })
}

/// Position and speed of `vehicle` at `t`, linearly interpolated between the
/// bracketing samples. Sample times return the sample verbatim.
pub fn position_at(
    timeline: &TraceTimeline,
    vehicle: VehicleId,
    t: f64,
) -> Result<(Point, f64), TraceError> {
    let samples = timeline.samples(vehicle).ok_or(TraceError::UnknownVehicle(vehicle))?;
    let (start, end) = (samples[0].time_s, samples[samples.len() - 1].time_s);
    if !(start..=end).contains(&t) {
        return Err(TraceError::OutOfSpan { vehicle, t, start, end });
    }
    let upper = samples.partition_point(|s| s.time_s < t);
    let hi = &samples[upper];
    if hi.time_s == t {
        return Ok((hi.position, hi.speed_mps));
    }
    let lo = &samples[upper - 1];
    let f = (t - lo.time_s) / (hi.time_s - lo.time_s);
    let lerp = |a: f64, b: f64| a + (b - a) * f;
    Ok((
        Point::new(lerp(lo.position.x, hi.position.x), lerp(lo.position.y, hi.position.y)),
        lerp(lo.speed_mps, hi.speed_mps),
    ))
}

/// Lane of the sample at or before `t` (the first sample before the span).
pub fn lane_at(timeline: &TraceTimeline, vehicle: VehicleId, t: f64) -> Option<u32> {
    let samples = timeline.samples(vehicle)?;
    let idx = samples.partition_point(|s| s.time_s <= t);
    Some(samples[idx.saturating_sub(1)].lane)
}
