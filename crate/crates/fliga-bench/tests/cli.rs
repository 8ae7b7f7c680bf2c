//! End-to-end checks of the command-line driver.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fliga-bench"))
}

fn repo_config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn validate_shipped_configs() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut checked = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = bin().arg("validate").arg(&path).output().unwrap();
            assert!(
                out.status.success(),
                "validate failed for {path:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            checked += 1;
        }
    }
    assert!(checked >= 10, "expected the shipped configs, found {checked}");
}

#[test]
fn validate_rejects_bad_config() {
    let dir = tempdir();
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "kind = \"patch_test\"\n").unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "config errors exit with 2");
}

#[test]
fn run_zero_steps_writes_initial_dump() {
    let dir = tempdir();
    let out = bin()
        .args(["run", &repo_config("patch_test_p2.toml"), "--steps", "0", "--output-dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("initial_points.csv").exists());
    assert!(dir.join("initial_patch.json").exists());
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn patch_test_run_writes_report_with_two_errors() {
    let dir = tempdir();
    let out = bin()
        .args(["run", &repo_config("patch_test_p2.toml"), "--output-dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,time,L2_vx,L2_vy,L2_p,dofs,wall_ms"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let l2_vx: f64 = row[2].parse().unwrap();
    let l2_vy: f64 = row[3].parse().unwrap();
    assert!(l2_vx < -3.0 && l2_vy < -3.0);
}

#[test]
fn fd_check_passes_on_patch_test() {
    let dir = tempdir();
    let out = bin()
        .args(["run", &repo_config("patch_test_p1.toml"), "--fd-check", "--output-dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("fd-check"));
}

#[test]
fn single_threaded_reruns_are_bit_identical() {
    // Short deposition run exercising contact, regulation and refinement.
    let cfg_text = std::fs::read_to_string(repo_config("am_straight.toml"))
        .unwrap()
        .replace("n_steps = 800", "n_steps = 12");
    let dir = tempdir();
    let cfg = dir.join("short.toml");
    std::fs::write(&cfg, cfg_text).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out_dir = dir.join(format!("run{run}"));
        let out = bin()
            .args(["run"])
            .arg(&cfg)
            .args(["--threads", "1", "--output-dir"])
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((
            std::fs::read(out_dir.join("final_points.csv")).unwrap(),
            std::fs::read(out_dir.join("report.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "point clouds differ between reruns");
    assert_eq!(outputs[0].1, outputs[1].1, "reports differ between reruns");
}

#[test]
fn checkpoint_roundtrip_via_inspect() {
    let cfg_text = std::fs::read_to_string(repo_config("taylor_couette_newtonian.toml"))
        .unwrap()
        .replace("n_steps = 25200", "n_steps = 5")
        .replace("checkpoint = false", "checkpoint = true");
    let dir = tempdir();
    let cfg = dir.join("tc.toml");
    std::fs::write(&cfg, cfg_text).unwrap();
    let out_dir = dir.join("out");
    let out = bin()
        .args(["run"])
        .arg(&cfg)
        .args(["--output-dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ck = out_dir.join("checkpoint.json");
    assert!(ck.exists());
    let out = bin()
        .args(["inspect"])
        .arg(&ck)
        .args(["--output-dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("checkpoint.patch.json").exists());
    assert!(dir.join("checkpoint.points.csv").exists());
    // Resume for a few more steps.
    let out = bin()
        .args(["run"])
        .arg(&cfg)
        .args(["--steps", "3", "--resume"])
        .arg(&ck)
        .args(["--output-dir"])
        .arg(dir.join("resumed"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "fliga-cli-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
