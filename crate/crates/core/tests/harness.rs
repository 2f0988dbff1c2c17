use polymerlab::error::Error;
use polymerlab::harness::{run_experiment, write_outputs, Command, ExperimentConfig};

fn small(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(include_str!("../../../presets/smoke.json")).unwrap();
    cfg.seed = seed;
    cfg
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for cmd in [Command::Cn, Command::PropACheck, Command::Invariance] {
        let a = run_experiment(cmd, &small(3)).unwrap().0.deterministic_json().unwrap();
        let b = run_experiment(cmd, &small(3)).unwrap().0.deterministic_json().unwrap();
        assert_eq!(a, b, "{}", cmd.name());
        let c = run_experiment(cmd, &small(4)).unwrap().0.deterministic_json().unwrap();
        assert_ne!(a, c, "{}", cmd.name());
    }
}

#[test]
fn empty_n_list_is_rejected() {
    let err = ExperimentConfig::from_json(r#"{"seed": 1, "n": []}"#).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn config_errors_are_listed_together() {
    let err = ExperimentConfig::from_json(r#"{"seed": 1, "preset": "nope", "n": [64, 16], "t": -1}"#).unwrap_err().to_string();
    for needle in ["nope", "ascending", "t"] {
        assert!(err.contains(needle), "{needle} missing from: {err}");
    }
    assert!(ExperimentConfig::from_json(r#"{"preset": "white"}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"seed": 1, "colour": 3}"#).is_err());
}

#[test]
fn shipped_presets_parse() {
    for name in ["white", "default", "mirror", "sheared", "spatial", "zero", "smoke"] {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(format!("{name}.json"));
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn outputs_land_on_disk() {
    let dir = std::env::temp_dir().join(format!("polymerlab-harness-{}", std::process::id()));
    let (report, artifacts) = run_experiment(Command::Constants, &small(1)).unwrap();
    write_outputs(&dir, &report, &artifacts).unwrap();
    let csv = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("criterion,N,estimate,se,target,tolerance,pass"));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("constants.json")).unwrap()).unwrap();
    assert!(json.get("sigma2").is_some());
    std::fs::remove_dir_all(&dir).unwrap();
}
