use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dfcv");
const REPORT_HEADER: &str = "protocol,scenario,vehicle_count,seed,mean_delay_s,median_delay_s,p95_delay_s,delivery_probability,collision_ratio,split_count,merge_count,destroy_count";

fn dfcv(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("DFCV_LOG").output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_owned()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn run_with_defaults_writes_one_report_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = dfcv(&["run", "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let report = lines(&out.join("report.csv"));
    assert_eq!(report[0], REPORT_HEADER);
    assert_eq!(report.len(), 2);
    assert!(report[1].starts_with("dfcv,urban,40,1,"));
    assert_eq!(lines(&out.join("events.csv"))[0], "time_s,kind,detail");
    for name in ["delay_vs_vehicles", "delivery_vs_vehicles", "collision_vs_vehicles"] {
        let plot = lines(&out.join("plotdata").join(format!("{name}.csv")));
        assert_eq!(plot[0], "vehicle_count,protocol,mean,stddev_over_seeds");
        assert_eq!(plot.len(), 2);
        assert!(plot[1].ends_with(",0"));
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"sim_duration_s": 5, "seed": 3}"#);
    let out = dir.path().join("out");
    assert!(dfcv(&["run", "--config", &config, "--seed", "11", "--out", out.to_str().unwrap()]).status.success());
    assert!(lines(&out.join("report.csv"))[1].starts_with("dfcv,urban,40,11,"));
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let out = dfcv(&["run", "--frobnicate", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_zero() {
    let out = dfcv(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("sweep"));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad_key = write_config(dir.path(), r#"{"tick": 0.1}"#);
    assert_eq!(dfcv(&["run", "--config", &bad_key, "--out", out.to_str().unwrap()]).status.code(), Some(1));
    let bad_value = write_config(dir.path(), r#"{"th_cap": 2.0}"#);
    assert_eq!(dfcv(&["run", "--config", &bad_value, "--out", out.to_str().unwrap()]).status.code(), Some(1));
    let missing = dir.path().join("missing.json");
    assert_eq!(
        dfcv(&["run", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(),
        Some(1)
    );
    assert!(!out.exists());
}

#[test]
fn sweep_row_count_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"sim_duration_s": 10}"#);
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let args = ["sweep", "--config", &config, "--seeds", "2", "--jobs", jobs, "--out", out.to_str().unwrap()];
        assert!(dfcv(&args).status.success());
        out
    };
    let a = run("a", "1");
    let b = run("b", "4");
    let report = lines(&a.join("report.csv"));
    assert_eq!(report.len(), 1 + 6 * 3 * 2);
    let plot = lines(&a.join("plotdata/delay_vs_vehicles.csv"));
    assert_eq!(plot.len(), 1 + 6 * 3);
    assert!(plot[1].starts_with("40,cloud-only,"));
    assert!(plot[18].starts_with("240,static-fog,"));
    for file in ["report.csv", "events.csv", "plotdata/delay_vs_vehicles.csv", "plotdata/collision_vs_vehicles.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file} differs");
    }
    assert!(lines(&a.join("events.csv"))[1].contains("run=dfcv/n=40/seed=1 "));
}

#[test]
fn compare_uses_configured_vehicle_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"sim_duration_s": 10, "vehicle_count": 80, "scenario": "highway"}"#);
    let out = dir.path().join("out");
    let args = ["compare", "--config", &config, "--protocols", "dfcv,cloud-only", "--seeds", "1", "--out", out.to_str().unwrap()];
    assert!(dfcv(&args).status.success());
    let report = lines(&out.join("report.csv"));
    assert_eq!(report.len(), 3);
    assert!(report[1].starts_with("dfcv,highway,80,1,"));
    assert!(report[2].starts_with("cloud-only,highway,80,1,"));
}

#[test]
fn trace_run_adopts_vehicle_count() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    fs::write(
        &trace,
        "time_s,vehicle_id,x_m,y_m,speed_mps,lane\n0,7,100,1.75,20,0\n10,7,300,1.75,20,0\n0,9,900,-1.75,20,2\n10,9,700,-1.75,20,2\n",
    )
    .unwrap();
    let config = write_config(dir.path(), r#"{"sim_duration_s": 10}"#);
    let out = dir.path().join("out");
    let res = dfcv(&["run", "--config", &config, "--trace", trace.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(lines(&out.join("report.csv"))[1].starts_with("dfcv,urban,2,1,"));
}
