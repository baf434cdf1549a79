use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loadkit::plotdata::{read_thevenin, read_trace, Table};
use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> String {
    root().join("fixtures").join(name).display().to_string()
}

fn case(name: &str) -> String {
    root().join("cases").join(name).display().to_string()
}

fn loadkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadkit"))
        .args(args)
        .env_remove("LOADKIT_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn prefix(dir: &tempfile::TempDir) -> String {
    format!("{}/", dir.path().display())
}

#[test]
fn check_point_a_is_on_boundary() {
    let out = loadkit(&["check", &fixture("tri3_resistive.json"), "--state", &fixture("pointA.json")]);
    assert_eq!(code(&out), 10);
    let r = json(&out);
    assert_eq!(r["results"]["on_boundary"], true);
    assert!(r["results"]["verdict"]["certificate"].is_object());
    assert_eq!(r["input"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn check_case14_is_inside() {
    let out = loadkit(&["check", &case("case14.m")]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["results"]["on_boundary"], false);
}

#[test]
fn missing_case_is_an_input_error() {
    let out = loadkit(&["check", "nonexistent.m"]);
    assert_eq!(code(&out), 2);
    assert!(json(&out)["error"].is_string());
}

#[test]
fn malformed_flags_are_input_errors() {
    let tri = fixture("tri3_resistive.json");
    assert_eq!(code(&loadkit(&["margin", &tri, "--q-limit", "bus=2,min=oops"])), 2);
    assert_eq!(code(&loadkit(&["pareto", &tri, "--z", "1,-1"])), 2);
    assert_eq!(code(&loadkit(&["pareto", &tri, "--z", "1,1,1"])), 2);
    assert_eq!(code(&loadkit(&["region", &tri, "--grid", "0:1"])), 2);
    assert_eq!(code(&loadkit(&["thevenin", &tri, "--bus", "1"])), 2);
    assert_eq!(code(&loadkit(&["check", &tri, "--epsilon", "-1"])), 2);
    let out = Command::new(env!("CARGO_BIN_EXE_loadkit"))
        .args(["check", &tri])
        .env("LOADKIT_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn unsolvable_loading_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let heavy = dir.path().join("heavy.json");
    let text = std::fs::read_to_string(fixture("two_bus.json")).unwrap().replace("0.2", "0.4");
    std::fs::write(&heavy, text).unwrap();
    let out = loadkit(&["check", heavy.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn margin_at_point_b() {
    let out = loadkit(&["margin", &fixture("tri3_resistive.json"), "--state", &fixture("pointB.json")]);
    assert_eq!(code(&out), 0);
    let m = json(&out)["results"]["m"].as_f64().unwrap();
    assert!((m - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9, "m = {m}");
}

#[test]
fn reactive_limit_reduces_case118_margin() {
    let c = case("case118.m");
    let free = json(&loadkit(&["margin", &c]))["results"]["m"].as_f64().unwrap();
    let out = loadkit(&["margin", &c, "--q-limit", "bus=69,min=-50,max=50"]);
    let r = json(&out);
    let limited = r["results"]["m"].as_f64().unwrap();
    assert!(limited < free, "{limited} !< {free}");
    assert_eq!(r["results"]["q_bindings"][0]["bus"], 69);
    assert_eq!(r["results"]["q_bindings"][0]["sense"], "max");
}

#[test]
fn epsilon_alarm_exit_code() {
    let tri = fixture("tri3_resistive.json");
    let calm = loadkit(&["check", &tri, "--state", &fixture("pointB.json"), "--epsilon", "1e-3"]);
    assert_eq!(code(&calm), 0);
    let alarm = loadkit(&["check", &tri, "--state", &fixture("pointB.json"), "--epsilon", "10"]);
    assert_eq!(code(&alarm), 11);
    assert_eq!(json(&alarm)["results"]["alarm"], true);
}

#[test]
fn pareto_symmetric_point_and_its_margin() {
    let dir = tempfile::tempdir().unwrap();
    let tri = fixture("tri3_resistive.json");
    let r = json(&loadkit(&["pareto", &tri, "--z", "1,1"]));
    let p: Vec<f64> = r["results"]["point"]["p"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x["p"].as_f64().unwrap())
        .collect();
    assert!((p[0] - 0.25).abs() < 1e-9 && (p[1] - 0.25).abs() < 1e-9, "{p:?}");
    // the located state is on the boundary according to check and margin
    let state = dir.path().join("located.json");
    let doc = serde_json::json!({ "buses": r["results"]["point"]["state"] });
    std::fs::write(&state, doc.to_string()).unwrap();
    let s = state.to_str().unwrap();
    assert_eq!(code(&loadkit(&["check", &tri, "--state", s])), 10);
    let m = json(&loadkit(&["margin", &tri, "--state", s]))["results"]["m"].as_f64().unwrap();
    assert!(m <= 1e-6, "m = {m}");
}

#[test]
fn pareto_sweep_writes_one_row_per_direction() {
    let dir = tempfile::tempdir().unwrap();
    let out = loadkit(&["pareto", &fixture("tri3_resistive.json"), "--sweep", "50", "--out", &prefix(&dir)]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    let path = r["files"][0].as_str().unwrap();
    let t = Table::load(Path::new(path)).unwrap();
    assert_eq!(t.rows.len(), 50);
    let located = r["results"]["sweep"]["located"].as_u64().unwrap() as usize;
    let p2 = t.column_f64("p_2").unwrap();
    assert_eq!(p2.iter().filter(|x| x.is_finite()).count(), located);
    // JSON rows and CSV rows agree bit for bit
    for (row, x) in r["results"]["sweep"]["rows"].as_array().unwrap().iter().zip(&p2) {
        match row["p"].as_array() {
            Some(p) => assert_eq!(p[0]["p"].as_f64().unwrap().to_bits(), x.to_bits()),
            None => assert!(x.is_nan()),
        }
    }
}

#[test]
fn case14_trace_falls_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = loadkit(&["pareto", &case("case14.m"), "--trace", "20", "--out", &prefix(&dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["results"]["trace"]["non_increasing_after_peak"], true);
    let path = dir.path().join("margin_trace.csv");
    let trace = read_trace(&Table::load(&path).unwrap()).unwrap();
    assert_eq!(trace.len(), 20);
    assert!(trace[0].2 > 1.0);
    assert!(trace[19].2 <= 1e-6);
    assert!(trace.windows(2).all(|w| w[1].0 > w[0].0), "scale increases");
}

#[test]
fn circles_gap_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let out = loadkit(&["circles", &fixture("tri3_mixed.json"), "--samples", "90", "--out", &prefix(&dir)]);
    let r = json(&out);
    let gap = |i: usize| r["results"]["buses"][i]["intersection"]["gap"].as_f64().unwrap();
    assert!(gap(1) < gap(0), "bus 3 gap {} !< bus 2 gap {}", gap(1), gap(0));
    let t = Table::load(&dir.path().join("circles.csv")).unwrap();
    assert_eq!(t.header, ["bus", "kind", "theta", "x", "y"]);
    assert_eq!(t.rows.len(), 4 * 90);
    assert!(t.column_f64("x").unwrap().iter().all(|x| x.is_finite()));
}

#[test]
fn region_tables_reparse() {
    let dir = tempfile::tempdir().unwrap();
    let out = loadkit(&[
        "region",
        &fixture("tri3_resistive.json"),
        "--grid",
        "0:1.2:0.02",
        "--out",
        &prefix(&dir),
    ]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    let region = Table::load(&dir.path().join("region.csv")).unwrap();
    assert_eq!(region.rows.len() as u64, r["results"]["points"].as_u64().unwrap());
    assert_eq!(region.header, ["v_2", "v_3", "p_2", "p_3", "det_j"]);
    let front = Table::load(&dir.path().join("front.csv")).unwrap();
    assert_eq!(front.rows.len() as u64, r["results"]["front_points"].as_u64().unwrap());
    let locus = Table::load(&dir.path().join("locus.csv")).unwrap();
    let classes = locus.column_index("class").unwrap();
    assert!(locus.rows.iter().any(|row| row[classes] == "boundary"));
    assert!(locus.rows.iter().any(|row| row[classes] == "interior"));
}

#[test]
fn seeded_grid_is_reproducible_and_shifted() {
    let tri = fixture("tri3_resistive.json");
    let grid = |seed: &str| {
        let r = json(&loadkit(&["region", &tri, "--grid", "0:1:0.1", "--seed", seed]));
        r["results"]["grid"].clone()
    };
    assert_eq!(grid("5"), grid("5"));
    assert_ne!(grid("5"), grid("6"));
    let lo = grid("5")["axes"][0]["lo"].as_f64().unwrap();
    assert!(lo > 0.0 && lo < 0.1);
}

#[test]
fn thevenin_sweep_zero_coincidence() {
    let dir = tempfile::tempdir().unwrap();
    let out = loadkit(&["thevenin", &fixture("tri3_resistive.json"), "--sweep", "201", "--out", &prefix(&dir)]);
    let r = json(&out);
    let zt = r["results"]["zero_load"]["thevenin"].as_f64().unwrap();
    let zp = r["results"]["zero_load"]["proposed"].as_f64().unwrap();
    assert!((zt - zp).abs() <= 1e-3 && (zt - 0.25).abs() <= 1e-3);
    let rows = read_thevenin(&Table::load(&dir.path().join("thevenin.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 201);
    assert_eq!(rows[0].1, 1.0);
    assert_eq!(rows[0].2, 1.0);
}

#[test]
fn csv_format_prints_the_main_table() {
    let out = loadkit(&[
        "margin",
        &fixture("tri3_resistive.json"),
        "--state",
        &fixture("pointB.json"),
        "--format",
        "csv",
    ]);
    let t = Table::read_from(out.stdout.as_slice()).unwrap();
    let m = t.column_f64("m").unwrap()[0];
    assert!((m - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
}

#[test]
fn reports_are_deterministic_apart_from_timing() {
    let strip = |out: Output| {
        let mut r = json(&out);
        r.as_object_mut().unwrap().remove("timing");
        serde_json::to_string(&r).unwrap()
    };
    let args = ["pareto", &fixture("tri3_lossy.json"), "--sweep", "24"].map(String::from);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let a = strip(loadkit(&args));
    let single = Command::new(env!("CARGO_BIN_EXE_loadkit"))
        .args(&args)
        .env("LOADKIT_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a, strip(single));
    assert_eq!(a, strip(loadkit(&args)));
}
