use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use vec_offload::model::{RsuId, VehicleId};
use vec_offload::scenario::load_scenario;
use vec_offload::sim::snapshot;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vec-offload"));
    c.env_remove("VEC_OFFLOAD_OUT");
    c
}

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/urban_grid.toml")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn first_line_is_manifest(o: &Output) -> Value {
    let s = stdout(o);
    let line = s.lines().next().unwrap_or_default();
    let json = line
        .strip_prefix("# manifest ")
        .unwrap_or_else(|| panic!("no manifest line in {s:?}"));
    serde_json::from_str(json).unwrap()
}

#[test]
fn unknown_algorithm_is_a_usage_error() {
    let o = bin()
        .args(["--algorithm", "simplex", "certify", "--trials", "1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let o = bin()
        .args(["solve", "/nonexistent/x.toml"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn certify_with_no_trials_succeeds() {
    let o = bin().args(["certify", "--trials", "0"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    first_line_is_manifest(&o);
}

#[test]
fn certify_rejects_oversized_family() {
    let o = bin()
        .args(["certify", "--trials", "1", "--tasks", "2,40"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn certify_small_run_passes() {
    let o = bin()
        .args([
            "--seed", "5", "--format", "rows", "certify", "--trials", "40",
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let s = stdout(&o);
    let row: Vec<&str> = s.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "saround");
    assert_eq!(row[1], "40");
    assert_eq!(row[6], "0");
}

/// Re-checks a solve output against the scenario snapshot without using the
/// library's validator.
#[test]
fn solve_output_passes_independent_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["--seed", "3", "--out"])
        .arg(dir.path())
        .args(["solve", "--time", "10"])
        .arg(shipped())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let man = first_line_is_manifest(&o);
    assert_eq!(man["seed"], 3);
    assert_eq!(man["algorithm"], "saround");

    let rec: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("urban_grid.assignment.json")).unwrap(),
    )
    .unwrap();
    let sc = load_scenario(&shipped()).unwrap();
    let mut cfg = sc.sim.clone();
    cfg.rng_seed = 3;
    let inst = snapshot(&sc, &cfg, 10.0).unwrap();

    let sel = rec["assignment"]["selected"].as_array().unwrap();
    assert!(!sel.is_empty());
    let mut seen = std::collections::BTreeSet::new();
    let mut used: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    let mut total = 0.0;
    for s in sel {
        let task_id = s["task_id"].as_u64().unwrap();
        let rsu_id = s["rsu_id"].as_u64().unwrap();
        let (b, c) = (s["rbs"].as_u64().unwrap(), s["cus"].as_u64().unwrap());
        assert!(seen.insert(task_id), "task {task_id} selected twice");
        let t = inst
            .tasks
            .iter()
            .find(|t| t.id.0 as u64 == task_id)
            .unwrap();
        let r = inst.rsus.iter().find(|r| r.id.0 as u64 == rsu_id).unwrap();
        let link = inst
            .link(VehicleId(t.vehicle_id.0), RsuId(r.id.0))
            .expect("selection on a missing link");
        assert!(link.accessible);
        let d_o = t.input_mb / (b as f64 * link.rate_mb_per_rb_s);
        let d_p = inst
            .profiles
            .proc_time(&t.service_type, &r.hardware_class, c as u32)
            .unwrap();
        assert!(d_o + d_p <= t.period_s + 1e-9, "task {task_id} misses");
        let u = (t.local_power_w * t.local_exec_s - t.offload_power_w * d_o) / t.period_s;
        assert!((u - s["utility"].as_f64().unwrap()).abs() < 1e-9);
        total += u;
        let e = used.entry(rsu_id).or_default();
        e.0 += b;
        e.1 += c;
    }
    for (id, (b, c)) in used {
        let r = inst.rsus.iter().find(|r| r.id.0 as u64 == id).unwrap();
        assert!(b <= r.total_rbs as u64 && c <= r.total_cus as u64);
    }
    let reported = rec["assignment"]["total_utility"].as_f64().unwrap();
    assert!((total - reported).abs() < 1e-6 * total.max(1.0));
}

#[test]
fn gen_then_simulate_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["--seed", "11", "--out"])
        .arg(dir.path())
        .args([
            "gen",
            "--name",
            "tiny",
            "--vehicles",
            "6",
            "--rsus",
            "2",
            "--duration",
            "12",
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let sc = dir.path().join("tiny.toml");
    assert!(sc.exists());

    let res = dir.path().join("res");
    let o = bin()
        .env("VEC_OFFLOAD_OUT", &res)
        .args(["--format", "rows", "simulate", "--events"])
        .arg(&sc)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    first_line_is_manifest(&o);
    for f in ["tiny.summary.json", "tiny.cycles.csv", "tiny.events.csv"] {
        assert!(res.join(f).exists(), "{f}");
    }
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("cycle,"));
}

#[test]
fn bench_matrix_rows_and_summary() {
    let args = [
        "bench",
        "--seeds",
        "2",
        "--vehicles",
        "6",
        "--rsus",
        "2",
        "--duration",
        "5",
        "--algorithms",
        "saround,greedy",
        "--qualities",
        "high",
        "--modes",
        "schedall",
    ];
    let rows = bin()
        .args(["--format", "rows"])
        .args(args)
        .output()
        .unwrap();
    assert_eq!(rows.status.code(), Some(0));
    assert_eq!(stdout(&rows).lines().count(), 2 + 4);
    let summary = bin().args(args).output().unwrap();
    assert_eq!(stdout(&summary).lines().count(), 2 + 2);
    assert_eq!(
        first_line_is_manifest(&rows)["config_hash"],
        first_line_is_manifest(&summary)["config_hash"]
    );
}

#[test]
fn bench_scaling_lists_sizes() {
    let o = bin()
        .args(["bench", "--scaling", "--sizes", "5,10", "--reps", "1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("5,"));
    assert!(lines[3].starts_with("10,"));
}

#[test]
fn shipped_scenario_loads() {
    let sc = load_scenario(&shipped()).unwrap();
    assert_eq!(sc.rsus.len(), 15);
    assert_eq!(sc.vehicle_count(), 80);
    assert!(sc
        .rsus
        .iter()
        .all(|r| r.total_rbs == 270 && r.total_cus == 16));
}
