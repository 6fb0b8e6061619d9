use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dynperturb"))
}

#[test]
fn witness_preset_writes_a_bundle_that_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w");
    let st = bin().args(["witness", "--out"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(out.join("report.json").exists());
    assert!(out.join("certificate.csv").exists());
    let v = bin().arg("verify").arg(&out).output().unwrap();
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stderr));
}

#[test]
fn edited_bundle_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let st = bin().args(["solve", "--seed", "5", "--out"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let path = out.join("report.json");
    let mut report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    report["tables"]["distances"][0]["distance"] = "2^-1".into();
    fs::write(&path, report.to_string()).unwrap();
    let v = bin().arg("verify").arg(&path).output().unwrap();
    assert_eq!(v.status.code(), Some(8));
    assert!(String::from_utf8_lossy(&v.stdout).contains("tables.distances[0]"));
}

#[test]
fn malformed_group_reference_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"model": {"kind": "cantor", "depth": 8}, "group": "Q8",
            "action": {"depth": 1}, "schedule": [{"n": 0, "m": 4, "k": 1, "c": 0}],
            "epsilon": "2^-3", "pipeline": "solve"}"#,
    )
    .unwrap();
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at group"));
}

#[test]
fn same_seed_same_tables() {
    let run = || {
        let o = bin().args(["limits", "--seed", "11", "--jobs", "2"]).output().unwrap();
        assert_eq!(o.status.code(), Some(0));
        let mut v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["timings"] = serde_json::Value::Null;
        v.to_string()
    };
    assert_eq!(run(), run());
}
