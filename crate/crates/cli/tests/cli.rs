use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polymerlab"))
}

fn scratch(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("polymerlab-cli-{name}-{}", std::process::id()))
}

#[test]
fn propagator_check_passes_and_writes_reports() {
    let out = scratch("prop");
    let o = bin().args(["propagator-check", "--seed", "7", "--threads", "1", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("criterion  1 PASS"), "{stdout}");
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("criterion,N,estimate,se,target,tolerance,pass"));
    assert!(out.join("propagator.csv").exists());
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn constants_subcommand_emits_constants_json() {
    let out = scratch("const");
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../presets/sheared.json");
    let o = bin().args(["constants", "--config", cfg]).env("POLYMERLAB_OUT", &out).output().unwrap();
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("constants.json")).unwrap()).unwrap();
    assert!((json["v"].as_f64().unwrap() + 0.125).abs() < 1e-12);
    std::fs::remove_dir_all(out).unwrap();
}

#[test]
fn unknown_flags_and_bad_configs_are_rejected() {
    let o = bin().args(["cn", "--bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let path = scratch("bad.json");
    std::fs::write(&path, r#"{"seed": 1, "n": [], "colour": 1}"#).unwrap();
    let o = bin().args(["cn", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    std::fs::remove_file(path).unwrap();
}
