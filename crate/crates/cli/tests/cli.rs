use std::path::Path;
use std::process::{Command, Output};

fn convexlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convexlab")).args(args).env_remove("CONVEXLAB_WORKERS").output().expect("binary runs")
}

fn text(o: &Output) -> (String, String) {
    (String::from_utf8_lossy(&o.stdout).into_owned(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn airy_check_passes_and_writes_its_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = convexlab(&["airy-check", "--output", out.to_str().unwrap()]);
    let (stdout, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{stdout}{stderr}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
    let table = std::fs::read_to_string(out.join("airy_zeros.csv")).unwrap();
    assert!(table.starts_with("k,omega_k,") && table.lines().count() > 50);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn missing_field_is_a_config_error_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"command": "green-eval", "params": {"a": 0.25, "eps0": 0.3, "t": 0.6,
            "x": {"lo": 0.1, "hi": 0.2, "n": 2}, "y": {"lo": -1.0, "hi": -0.9, "n": 2}}}"#,
    );
    let o = convexlab(&["run", "--config", &cfg, "--output", dir.path().join("out").to_str().unwrap()]);
    let (_, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(2), "{stderr}");
    assert!(stderr.contains("params") && stderr.contains("`h`"), "{stderr}");
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"command": "airy-check", "params": {"k_max": 5, "kmax": 6}}"#);
    let o = convexlab(&["run", "--config", &cfg, "--output", dir.path().join("out").to_str().unwrap()]);
    let (_, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(2), "{stderr}");
    assert!(stderr.contains("kmax"), "{stderr}");
}

#[test]
fn empty_saturation_window_names_the_violated_inequality() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"command": "saturation", "params": {
            "sweep": {"evaluator": "spectral", "regime": "tangential", "h": 0.02, "a": 0.05, "eps0": 0.3,
                      "t_list": [0.6, 0.7], "x_span": "half", "nx": 3, "ny": 11},
            "a_list": [0.05], "a_fit_t": 0.6, "min_decades": 0.05}}"#,
    );
    let o = convexlab(&["run", "--config", &cfg, "--output", dir.path().join("out").to_str().unwrap()]);
    let (_, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(2), "{stderr}");
    assert!(stderr.contains("t h^(1/3) << a"), "{stderr}");
}

#[test]
fn subcommand_and_config_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"command": "airy-check"}"#);
    let o = convexlab(&["poisson-check", "--config", &cfg, "--output", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), r#"{"command": "airy-check", "params": {"k_max": 20}, "workers": 1}"#);
    assert_eq!(convexlab(&["run", "--config", &cfg, "--output", out.to_str().unwrap()]).status.code(), Some(0));
    let manifest = out.join("manifest.json");

    let o = convexlab(&["replay", manifest.to_str().unwrap()]);
    let (stdout, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{stdout}{stderr}");
    assert!(stdout.contains("PASS replay"), "{stdout}");

    let table = out.join("airy_zeros.csv");
    let original = std::fs::read_to_string(&table).unwrap();
    let mut lines: Vec<String> = original.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
    cells[1] = "9.5".into();
    lines[3] = cells.join(",");
    std::fs::write(&table, lines.join("\n") + "\n").unwrap();
    let o = convexlab(&["replay", manifest.to_str().unwrap()]);
    let (stdout, _) = text(&o);
    assert_eq!(o.status.code(), Some(1), "{stdout}");
    assert!(stdout.contains("MISMATCH airy_zeros.csv: row 3, column 1"), "{stdout}");
}

#[test]
fn edited_manifest_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(convexlab(&["airy-check", "--output", out.to_str().unwrap()]).status.code(), Some(0));
    let manifest = out.join("manifest.json");
    let edited = std::fs::read_to_string(&manifest).unwrap().replace("\"k_max\": 50", "\"k_max\": 40");
    std::fs::write(&manifest, edited).unwrap();
    let o = convexlab(&["replay", manifest.to_str().unwrap()]);
    let (_, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(2), "{stderr}");
    assert!(stderr.contains("hash mismatch"), "{stderr}");
}
