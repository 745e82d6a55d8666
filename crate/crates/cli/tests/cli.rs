use std::path::Path;
use std::process::{Command, Output};

fn wvsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wvsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_PROTOCOL: &str = "[protocol]\nrepetitions = 2000\n";

#[test]
fn protocol_runs_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_PROTOCOL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let out = wvsim(&[
            "protocol",
            "--config",
            &cfg,
            "--seed",
            "11",
            "--threads",
            threads,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["record.csv", "estimate.csv", "comparison.csv", "manifest.json"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
    let record = std::fs::read_to_string(a.join("record.csv")).unwrap();
    assert_eq!(record.lines().count(), 2001);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_PROTOCOL);
    let first = tmp.path().join("first");
    let out = wvsim(&["protocol", "--config", &cfg, "--seed", "4", "--out", first.to_str().unwrap()]);
    assert!(out.status.success());
    let second = tmp.path().join("second");
    let saved = first.join("config.toml");
    let out = wvsim(&[
        "protocol",
        "--config",
        saved.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(first.join("record.csv")).unwrap(),
        std::fs::read(second.join("record.csv")).unwrap()
    );
}

#[test]
fn unknown_key_exits_with_config_status() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[protocol]\nrepetitons = 10\n");
    let out = wvsim(&["protocol", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("repetitons"));
}

#[test]
fn too_few_repetitions_exit_with_statistics_status() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[protocol]\nrepetitions = 5\n");
    let out = wvsim(&["protocol", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn short_thermalize_run_writes_report_and_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[thermalize]\nscenario = \"A\"\n\n[thermalize.overrides]\n\
         grid_points = 128\nx_min = -8.0\nx_max = 8.0\ncorrelation_length = 0.8\n\
         horizon = 0.4\ndt = 0.002\nstride = 10\n",
    );
    let dir = tmp.path().join("t");
    let out = wvsim(&["thermalize", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.join("report_A.txt")).unwrap();
    assert!(report.contains("t_eq:"), "{report}");
    let csv = std::fs::read_to_string(dir.join("thermal_A.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 21);
    assert!(csv.starts_with("t,K,V_H,V_D,V_I,H,K_B,Q,K_O"));
}

#[test]
fn window_longer_than_half_the_horizon_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[thermalize]\nscenario = \"B\"\nwindow = 30.0\n");
    let out = wvsim(&["thermalize", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evolve_manybody_weakfield_and_tomography_write_their_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [(&str, &str, &[&str]); 4] = [
        ("evolve", "[evolve]\nsteps = 200\nstride = 50\n", &["diagnostics.csv", "final.wvsnap"]),
        ("manybody", "", &["reduced.csv", "recovery.json"]),
        ("weakfield", "[weakfield]\noperator = \"kinetic\"\n", &["weak_value.csv", "bohmian.csv"]),
        ("tomography", "", &["reconstruction.csv", "tomography.json"]),
    ];
    for (sub, text, files) in cases {
        let cfg = write_config(tmp.path(), text);
        let dir = tmp.path().join(sub);
        let out = wvsim(&[sub, "--config", &cfg, "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
        for f in files.iter().chain(&["config.toml", "manifest.json"]) {
            assert!(dir.join(f).exists(), "{sub} missing {f}");
        }
    }

    let snap = tmp.path().join("evolve").join("final.wvsnap");
    let cfg = write_config(tmp.path(), &format!("[tomography]\nsnapshot = {:?}\n", snap.to_str().unwrap()));
    let dir = tmp.path().join("tomo2");
    let out = wvsim(&["tomography", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("tomography.json")).unwrap()).unwrap();
    assert!(json["fidelity"].as_f64().unwrap() > 0.999_999);

    let rec: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("manybody").join("recovery.json")).unwrap(),
    )
    .unwrap();
    assert!(rec["abs_error"].as_f64().unwrap() < 1e-8);
}
