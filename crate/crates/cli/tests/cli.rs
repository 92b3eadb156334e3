use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn emff() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_emff"));
    cmd.env_remove("EMFF_OUT_DIR");
    cmd
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_ok(args: &[&str]) -> Output {
    let o = emff().args(args).output().unwrap();
    assert!(o.status.success(), "emff {args:?} failed: {}", stderr(&o));
    o
}

fn bundled_text(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../core/scenarios/{name}.toml"));
    fs::read_to_string(path).unwrap()
}

#[test]
fn run_exp3_writes_csv_and_metrics() {
    let out = scratch("run_exp3");
    run_ok(&["run", "exp3_repulsion", "--out", out.to_str().unwrap()]);
    let dir = out.join("exp3_repulsion");
    let csv = fs::read_to_string(dir.join("telemetry.csv")).unwrap();
    assert!(csv.starts_with("t_s,q_1_2_m,r_hat_1_2_m,v_hat_1_2_mps,I_1_2_A,F_hat_1_2_N,q_2_1_m"));
    assert_eq!(csv.lines().count(), 402);

    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap();
    let ts = m["pairs"][0]["settling_time_s"].as_f64().expect("settled");
    assert!((ts - 18.3).abs() <= 1.83, "T_s = {ts}");
}

#[test]
fn identical_seeds_give_identical_csv() {
    let out = scratch("determinism");
    let read = |tag: &str| {
        let dir = out.join(tag);
        run_ok(&["run", "exp6_three_repulsion", "--seed", "7", "--out", dir.to_str().unwrap()]);
        fs::read(dir.join("exp6_three_repulsion/telemetry.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn out_dir_from_environment() {
    let out = scratch("env_out");
    let o = emff()
        .env("EMFF_OUT_DIR", &out)
        .args(["run", "exp1_open_attraction"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("exp1_open_attraction/telemetry.csv").exists());
}

#[test]
fn inverted_band_is_a_config_error() {
    let dir = scratch("bad_band");
    let text = bundled_text("exp6_three_repulsion").replace("eps1_m = 0.021", "eps1_m = 0.010");
    let path = dir.join("bad.toml");
    fs::write(&path, text).unwrap();
    let o = emff().args(["run", path.to_str().unwrap(), "--out", dir.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("eps1") && msg.contains("line"), "{msg}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = scratch("unknown_key");
    let text = bundled_text("exp3_repulsion").replace("[coil]", "[coil]\nwire_gauge = 22");
    let path = dir.join("bad.toml");
    fs::write(&path, text).unwrap();
    let o = emff().args(["run", path.to_str().unwrap(), "--out", dir.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wire_gauge"));
}

#[test]
fn non_dividing_dt_is_a_config_error() {
    let out = scratch("bad_dt");
    let o = emff()
        .args(["run", "exp3_repulsion", "--dt", "0.0003", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dt"));
}

#[test]
fn missing_scenario_is_a_config_error() {
    let o = emff().args(["run", "no_such_scenario"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("exp3_repulsion"));
}

#[test]
fn collision_is_a_numeric_abort() {
    let dir = scratch("collision");
    // Two satellites on top of each other.
    let text = bundled_text("exp1_open_attraction").replace("position_m = 0.508", "position_m = 0.0");
    let path = dir.join("collide.toml");
    fs::write(&path, text).unwrap();
    let o = emff().args(["run", path.to_str().unwrap(), "--out", dir.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn verify_passes_and_reports_gains() {
    let o = run_ok(&["verify"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for suite in ["allocation", "spring-dashpot", "averaging", "riccati", "momentum"] {
        assert!(text.lines().any(|l| l.starts_with("PASS") && l.contains(suite)), "{text}");
    }
    assert!(text.contains("reference [0.0942, 0.0466]"));
    assert!(text.contains("reference [0.1064, 0.0598]"));
}

#[test]
fn verify_catches_flipped_radial_sign() {
    let o = emff().args(["verify", "--inject-fault", "flip-h-radial"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL allocation"));
}

#[test]
fn plot_is_deterministic_and_trace_settles() {
    let out = scratch("plot");
    run_ok(&["run", "exp3_repulsion", "--out", out.to_str().unwrap()]);
    let csv = out.join("exp3_repulsion/telemetry.csv");

    let text = fs::read_to_string(&csv).unwrap();
    let last = text.lines().last().unwrap();
    let r_hat: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert!((r_hat.abs() - 0.45).abs() <= 0.0045, "final |r_hat| = {r_hat}");

    let render = |tag: &str| {
        let dir = out.join(tag);
        run_ok(&["plot", csv.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--desired", "-0.45"]);
        fs::read(dir.join("plot_1_2.svg")).unwrap()
    };
    let a = render("svg_a");
    assert_eq!(a, render("svg_b"));
    let svg = String::from_utf8(a).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<polyline").count() == 5);
    assert!(out.join("svg_a/plot_2_1.svg").exists());
}

#[test]
fn plot_rejects_empty_and_malformed_csv() {
    let dir = scratch("plot_bad");
    let empty = dir.join("empty.csv");
    fs::write(&empty, "t_s,q_1_2_m,r_hat_1_2_m,v_hat_1_2_mps,I_1_2_A,F_hat_1_2_N\n").unwrap();
    let garbage = dir.join("garbage.csv");
    fs::write(&garbage, "hello,world\n1,2\n").unwrap();
    for f in [&empty, &garbage, &dir.join("missing.csv")] {
        let o = emff().args(["plot", f.to_str().unwrap(), "--out", dir.to_str().unwrap()]).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{}", f.display());
    }
}

#[test]
fn metrics_from_csv_match_run() {
    let out = scratch("metrics");
    let run = run_ok(&["run", "exp4_attraction", "--out", out.to_str().unwrap()]);
    let csv = out.join("exp4_attraction/telemetry.csv");
    let o = run_ok(&["metrics", csv.to_str().unwrap(), "--desired", "-0.45", "--pair", "1,2"]);
    // Same numbers, recomputed from 9-digit CSV text.
    assert_eq!(String::from_utf8(o.stdout).unwrap(), String::from_utf8(run.stdout).unwrap());
}

#[test]
fn monte_carlo_summary() {
    let out = scratch("mc");
    run_ok(&["run", "exp3_repulsion", "--monte-carlo", "3", "--out", out.to_str().unwrap()]);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("exp3_repulsion/metrics.json")).unwrap()).unwrap();
    assert_eq!(m["monte_carlo"]["seeds"], serde_json::json!([1, 2, 3]));
    assert!(m["monte_carlo"]["max_force_n"]["mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn list_names_every_bundled_scenario() {
    let o = run_ok(&["list"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 8);
}
