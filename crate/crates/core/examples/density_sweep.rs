//! Prints seed-averaged metrics for every protocol across vehicle densities.
//!
//! Usage: `cargo run --release --example density_sweep -- [urban|highway] [duration_s]`

use dfcv_core::config::{ProtocolKind, Scenario, SimConfig};
use dfcv_core::engine::run;

const SEEDS: u64 = 5;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scenario: Scenario = args.get(1).map_or(Scenario::Urban, |s| s.parse().expect("urban or highway"));
    let duration: f64 = args.get(2).map_or(300.0, |s| s.parse().expect("duration in seconds"));
    println!("protocol     n    delay_s  delivery  collision");
    for protocol in ProtocolKind::ALL {
        for n in [40u32, 80, 120, 160, 200, 240] {
            let mut sums = [0.0; 3];
            for seed in 1..=SEEDS {
                let config = SimConfig {
                    vehicle_count: n,
                    protocol,
                    seed,
                    scenario,
                    sim_duration_s: duration,
                    ..SimConfig::default()
                };
                let report = run(config, None).expect("run succeeds").report;
                sums[0] += report.delay_stats.map_or(f64::NAN, |d| d.mean);
                sums[1] += report.delivery_probability.unwrap_or(f64::NAN);
                sums[2] += report.collision_ratio.unwrap_or(f64::NAN);
            }
            let [delay, delivery, collision] = sums.map(|s| s / SEEDS as f64);
            println!("{protocol:<10} {n:3}  {delay:.5}   {delivery:.5}   {collision:.5}");
        }
    }
}
