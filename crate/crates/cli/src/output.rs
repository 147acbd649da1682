//! CSV writers for reports, event logs and plot data.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use dfcv_core::fog::FogEvent;
use dfcv_core::metrics::RunReport;

use crate::CliError;

pub const REPORT_HEADER: [&str; 12] = [
    "protocol",
    "scenario",
    "vehicle_count",
    "seed",
    "mean_delay_s",
    "median_delay_s",
    "p95_delay_s",
    "delivery_probability",
    "collision_ratio",
    "split_count",
    "merge_count",
    "destroy_count",
];

pub const EVENTS_HEADER: [&str; 3] = ["time_s", "kind", "detail"];
pub const PLOT_HEADER: [&str; 4] = ["vehicle_count", "protocol", "mean", "stddev_over_seeds"];

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv<R: AsRef<[u8]>>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<R>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn report_row(r: &RunReport) -> Vec<String> {
    let d = r.delay_stats;
    vec![
        r.protocol.to_string(),
        r.scenario.to_string(),
        r.vehicle_count.to_string(),
        r.seed.to_string(),
        opt(d.map(|d| d.mean)),
        opt(d.map(|d| d.median)),
        opt(d.map(|d| d.p95)),
        opt(r.delivery_probability),
        opt(r.collision_ratio),
        r.split_count.to_string(),
        r.merge_count.to_string(),
        r.destroy_count.to_string(),
    ]
}

pub fn write_report(path: &Path, reports: &[RunReport]) -> Result<(), CliError> {
    write_csv(path, &REPORT_HEADER, reports.iter().map(report_row))
}

/// Writes fog events. `label` prefixes each detail when several runs share
/// one file.
pub fn write_events<'a>(
    path: &Path,
    runs: impl IntoIterator<Item = (Option<String>, &'a [FogEvent])>,
) -> Result<(), CliError> {
    let rows = runs.into_iter().flat_map(|(label, events)| {
        events.iter().map(move |e| {
            let detail = match &label {
                Some(l) => format!("run={l} {}", e.kind),
                None => e.kind.to_string(),
            };
            vec![e.time.to_string(), e.kind.label().to_string(), detail]
        })
    });
    write_csv(path, &EVENTS_HEADER, rows)
}

pub fn write_failure_curve(path: &Path, curve: &[(u64, f64)]) -> Result<(), CliError> {
    write_csv(path, &["k", "probability"], curve.iter().map(|(k, p)| vec![k.to_string(), p.to_string()]))
}

/// Mean and sample standard deviation; the deviation is 0 for one sample.
pub fn mean_stddev(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

type Metric = fn(&RunReport) -> Option<f64>;

pub const PLOT_METRICS: [(&str, Metric); 3] = [
    ("delay_vs_vehicles", |r| r.delay_stats.map(|d| d.mean)),
    ("delivery_vs_vehicles", |r| r.delivery_probability),
    ("collision_vs_vehicles", |r| r.collision_ratio),
];

/// One row per (vehicle_count, protocol), ordered by vehicle count then
/// protocol name.
pub fn plot_rows(reports: &[RunReport], metric: Metric) -> Vec<Vec<String>> {
    let mut cells: BTreeMap<(u32, String), Vec<f64>> = BTreeMap::new();
    for r in reports {
        let values = cells.entry((r.vehicle_count, r.protocol.to_string())).or_default();
        values.extend(metric(r));
    }
    cells
        .into_iter()
        .map(|((n, protocol), values)| {
            let stats = mean_stddev(&values);
            vec![n.to_string(), protocol, opt(stats.map(|s| s.0)), opt(stats.map(|s| s.1))]
        })
        .collect()
}

pub fn write_plotdata(dir: &Path, reports: &[RunReport]) -> Result<(), CliError> {
    let plot_dir = dir.join("plotdata");
    fs::create_dir_all(&plot_dir).map_err(|e| io_err(&plot_dir, e))?;
    for (name, metric) in PLOT_METRICS {
        write_csv(&plot_dir.join(format!("{name}.csv")), &PLOT_HEADER, plot_rows(reports, metric))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}
