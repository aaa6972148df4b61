use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fgash(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgash"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FGASH_CACHE_DIR")
        .output()
        .unwrap()
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, patch: &[(&str, &str)]) -> PathBuf {
    let mut text = std::fs::read_to_string(configs().join("smoke.json")).unwrap();
    for (from, to) in patch {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn inspect_model_writes_the_coupling_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = fgash(
        &[
            "inspect-model",
            "conical",
            "--delta",
            "0.1",
            "--x-min",
            "-1",
            "--x-max",
            "1",
            "--points",
            "3",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,E0,E1,d01,D01");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("0,-0.1,0.1,-5,"));
}

#[test]
fn run_fga_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("smoke.json");
    let out = fgash(
        &["run-fga", config.to_str().unwrap(), "-o", "result"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ["errors.csv", "stats.csv", "field.csv", "reference.csv"] {
        assert!(dir.path().join("result").join(name).exists(), "{name}");
    }
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .starts_with(",M=1,M=2"));
}

#[test]
fn sample_init_dumps_every_mesh_node() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("smoke.json");
    let out = fgash(
        &["sample-init", config.to_str().unwrap(), "-o", "a.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert!(text.starts_with("q,p,re_A,im_A\n"));
    assert!(text.lines().count() > 1000);
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let too_coarse = write_config(
        dir.path(),
        &[("\"t_final\": 1.0", "\"t_final\": 1.0, \"dt\": 0.25")],
    );
    let out = fgash(&["run-fga", too_coarse.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too large"));
    let missing = fgash(&["run-reference", "nope.json"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    let unknown = fgash(&["inspect-model", "nope"], dir.path());
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn numerical_aborts_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // the packet reaches the edge of a one-period reference domain by t = 1.5
    let config = write_config(
        dir.path(),
        &[(
            "\"t_final\": 1.0",
            "\"t_final\": 1.5, \"reference\": {\"dx\": 0.006135923151542565, \"dt\": 0.001953125, \"half_periods\": 1.0}",
        )],
    );
    let out = fgash(&["run-reference", config.to_str().unwrap()], dir.path());
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("domain edge"));
}
