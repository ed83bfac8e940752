mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::scenario_path;

fn rugsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rugsim")).args(args).env_remove("RUGSIM_OUT").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_then_verify_clean_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = rugsim(&["run", "--scenario", s(&scenario_path("minimal.json")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["events.jsonl", "telemetry.csv", "state.json", "hash.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_eq!(code(&rugsim(&["verify", "--trace", s(&out)])), 0);
}

#[test]
fn edited_balance_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    assert_eq!(code(&rugsim(&["run", "--scenario", s(&scenario_path("minimal.json")), "--out", s(&out)])), 0);
    let path = out.join("state.json");
    let mut state: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let bal = &mut state["balances"][0]["amount"];
    let edited = format!("{}1", bal.as_str().unwrap());
    *bal = serde_json::Value::String(edited);
    std::fs::write(&path, serde_json::to_string_pretty(&state).unwrap()).unwrap();
    assert_eq!(code(&rugsim(&["verify", "--trace", s(&out)])), 4);
}

#[test]
fn missing_trace_file_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    assert_eq!(code(&rugsim(&["run", "--scenario", s(&scenario_path("minimal.json")), "--out", s(&out)])), 0);
    std::fs::remove_file(out.join("telemetry.csv")).unwrap();
    assert_eq!(code(&rugsim(&["verify", "--trace", s(&out)])), 2);
}

#[test]
fn load_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name": "x", "chains": []"#).unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&rugsim(&["run", "--scenario", s(&bad), "--out", s(&out)])), 2);
    assert_eq!(code(&rugsim(&["run", "--scenario", s(&dir.path().join("nope.json")), "--out", s(&out)])), 2);
    assert_eq!(code(&rugsim(&["run", "--scenario", s(&scenario_path("minimal.json")), "--blocks", "0"])), 2);
    assert_eq!(code(&rugsim(&["frobnicate"])), 2);
}

#[test]
fn strict_mode_exits_3_on_failed_events() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario_path("minimal.json")).unwrap()).unwrap();
    // burning more than alice holds records a failed event
    doc["agents"][0]["script"][1]["do"]["burn"]["amount"] = "50".into();
    let path = dir.path().join("s.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&rugsim(&["run", "--scenario", s(&path), "--out", s(&out)])), 0);
    assert_eq!(code(&rugsim(&["run", "--scenario", s(&path), "--out", s(&out), "--strict"])), 3);
    assert_eq!(
        code(&rugsim(&["run", "--scenario", s(&scenario_path("minimal.json")), "--out", s(&out), "--strict"])),
        0
    );
}

#[test]
fn seed_and_blocks_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_path("scam_e2e.json");
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["run", "--scenario", s(&path), "--out", s(&out)];
        args.extend_from_slice(extra);
        assert_eq!(code(&rugsim(&args)), 0);
        std::fs::read_to_string(out.join("hash.txt")).unwrap()
    };
    assert_eq!(run("a", &[]), run("b", &[]));
    assert_ne!(run("c", &[]), run("d", &["--seed", "99"]));
    let out = dir.path().join("e");
    assert_eq!(code(&rugsim(&["run", "--scenario", s(&path), "--out", s(&out), "--blocks", "2"])), 0);
    let rows = std::fs::read_to_string(out.join("telemetry.csv")).unwrap().lines().count();
    // one row per chain per height
    assert_eq!(rows, 1 + 2 * 2);
}

#[test]
fn out_defaults_to_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rugsim"))
        .args(["figures", "--which", "peg"])
        .env("RUGSIM_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("peg.csv").exists());
}

fn series(csv_text: &str) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for line in csv_text.lines().skip(1) {
        let name = line.split(',').next().unwrap().to_string();
        if !seen.contains(&name) {
            seen.push(name);
        }
    }
    seen
}

#[test]
fn figures_have_expected_series_and_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        assert_eq!(code(&rugsim(&["figures", "--out", s(dir)])), 0);
    }
    let read = |d: &Path, f: &str| std::fs::read_to_string(d.join(f)).unwrap();
    for f in ["peg.csv", "supply.csv", "whale.csv", "cumulative.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs between runs");
    }
    assert_eq!(series(&read(a.path(), "peg.csv")), ["falling", "rising"]);
    assert_eq!(series(&read(a.path(), "whale.csv")), ["lambda=1.5", "lambda=2", "lambda=3"]);
    assert_eq!(series(&read(a.path(), "cumulative.csv")), ["n=1", "n=4", "n=10"]);
    assert_eq!(read(a.path(), "peg.csv").lines().count(), 1 + 400);
}

fn summary(dir: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(dir.join("summary.csv")).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn lambda_sweep_gives_twenty_monotone_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = rugsim(&[
        "sweep",
        "--scenario",
        s(&scenario_path("sweep_whale.json")),
        "--param",
        "vaults[0].params.penalty_lambda=1.1:3.0:0.1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = summary(dir.path());
    assert_eq!(rows.len(), 20);
    let penalties: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    // the whale holds less than the whole vault, so a larger exponent shrinks its surcharge
    assert!(penalties.windows(2).all(|w| w[1] < w[0]), "{penalties:?}");
    assert!(dir.path().join("run_19").join("hash.txt").exists());
}

#[test]
fn delta_gamma_sweep_row_zero_matches_one_shot() {
    let dir = tempfile::tempdir().unwrap();
    let o = rugsim(&[
        "sweep",
        "--scenario",
        s(&scenario_path("sweep_split.json")),
        "--param",
        "vaults[0].params.delta_gamma=0:0.05:0.01",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = summary(dir.path());
    assert_eq!(rows.len(), 6);
    assert_eq!(&rows[0][1], "0");
    assert_eq!(&rows[0][4], "4");
    // 600 deposited, gamma_base 0.05
    let one_shot = rugsim::vault::cumulative_penalty(
        rugsim::fixed::FixedAmount::from_int(600),
        1,
        common::fa("0.05"),
        rugsim::fixed::FixedAmount::ZERO,
    )
    .unwrap();
    assert_eq!(rows[0][5].parse::<rugsim::fixed::FixedAmount>().unwrap(), one_shot);
}

#[test]
fn empty_sweep_range_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_path("sweep_whale.json");
    for p in ["vaults[0].params.penalty_lambda=3:1.1:0.1", "vaults[0].params.penalty_lambda=1.1:3:0", "nokey"] {
        assert_eq!(code(&rugsim(&["sweep", "--scenario", s(&path), "--param", p, "--out", s(dir.path())])), 2, "{p}");
    }
}

#[test]
fn schema_is_json() {
    let o = rugsim(&["schema"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["properties"]["agents"].is_object());
}

#[test]
fn regen_golden_reproduces_the_pinned_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.json");
    let scenario = scenario_path("scam_e2e.json");
    assert_eq!(code(&rugsim(&["verify", "--regen-golden", s(&scenario), "--golden", s(&out)])), 0);
    let pinned = scenario_path("golden/scam_e2e.json");
    assert_eq!(std::fs::read_to_string(out).unwrap(), std::fs::read_to_string(pinned).unwrap());
}

#[test]
fn published_schema_is_current() {
    let o = rugsim(&["schema"]);
    let published = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/scenario.schema.json");
    assert_eq!(String::from_utf8(o.stdout).unwrap(), std::fs::read_to_string(published).unwrap());
}
