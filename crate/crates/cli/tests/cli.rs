use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn slp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slp"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn slp")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"{
  "methods": ["OB", "SLP", "SLPRo-symmetry"],
  "users": 2, "antennas": 2,
  "modulations": ["qpsk"],
  "snr_db": [4.771212547196624, 7.781512503836436, 9.542425094393248],
  "channel": {"model": "iid"},
  "trials": 2, "seed": 31, "eps": 1e-3
}"#;

#[test]
fn help_exits_zero() {
    let o = slp(&["table", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Usage"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(slp(&["table", "--bogus"]).status.code(), Some(1));
    assert_eq!(slp(&["power-sweep"]).status.code(), Some(1));
    assert_eq!(slp(&["rotate", "--mod", "qpsk", "--snr-db", "3"]).status.code(), Some(1));
}

#[test]
fn infeasible_channel_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.json", "[[[1,0],[0.5,0.5]],[[1,0],[0.5,0.5]]]");
    let o = slp(&["table", "--channel", h.to_str().unwrap(), "--mod", "qpsk", "--snr-db", "4.771", "--no-rotate"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn rotate_on_the_fixed_channel() {
    let h = root().join("fixtures/h_test.json");
    let o = slp(&["rotate", "--channel", h.to_str().unwrap(), "--mod", "qpsk", "--snr-db", "4.771", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["gap"].as_f64().unwrap() <= 1e-4);
    assert!(v["certified"].as_bool().unwrap());
    assert!((v["power_db"].as_f64().unwrap() - 35.47).abs() <= 0.3);
    assert_eq!(v["theta_deg"].as_array().unwrap().len(), 2);
}

#[test]
fn power_sweep_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = slp(&["power-sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    let csv = std::fs::read_to_string(a.join("power_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert!(csv.starts_with("method,snr_db,mean_power_db,std,trials"));
    assert!(csv.ends_with('\n'));
    assert_eq!(csv, std::fs::read_to_string(b.join("power_sweep.csv")).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 31);
    assert_eq!(manifest["trial_seeds"].as_array().unwrap().len(), 2);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let out = dir.path().join("o");
    let o = slp(&[
        "power-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "99",
        "--trials",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 99);
    assert!(stdout(&o).lines().skip(1).all(|l| l.split(',').nth(4) == Some("1")));
}

#[test]
fn table_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let h = root().join("fixtures/h_test.json");
    let out = dir.path().join("t");
    let o = slp(&[
        "table", "--channel", h.to_str().unwrap(), "--mod", "qpsk", "--snr-db", "4.771", "--no-rotate",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("table.json")).unwrap();
    let table = slp_core::slp::LookupTable::from_json(&text).unwrap();
    assert_eq!(table.entries.len(), 16);
    assert_eq!(table.rotation, vec![0.0, 0.0]);
}

#[test]
fn ser_and_oracle_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let o = slp(&["ser", "--config", cfg.to_str().unwrap(), "--method", "SLP", "--noise-scale", "0", "--noise-trials", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap() == 0.0));

    let h = root().join("fixtures/h_test.json");
    let o = slp(&["oracle", "--channel", h.to_str().unwrap(), "--mod", "qpsk", "--snr-db", "4.771", "--resolution", "5", "--csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("theta2_deg,power"));
    assert_eq!(text.lines().filter(|l| l.contains(',') && !l.starts_with("theta")).count(), 72);
}

#[test]
fn fixtures_write_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fx");
    let o = slp(&["fixtures", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let h = slp_core::channel::ChannelMatrix::load(&out.join("h_test.json")).unwrap();
    assert_eq!(h, slp_core::fixtures::h_test());
    assert!(out.join("reference_powers.json").exists());

    let o = slp(&["fixtures", "--check", "--mod", "qpsk"]);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("qpsk,")).collect();
    assert_eq!(rows.len(), 3);
    let all_ok = rows.iter().all(|l| l.ends_with(",true"));
    assert_eq!(o.status.code(), Some(if all_ok { 0 } else { 3 }));
}
