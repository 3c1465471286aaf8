//! CLI-level acceptance: reruns with an identical config and seed in
//! --serial mode must produce byte-identical artifacts (manifests carry
//! wall time and are the one exclusion), plus the command error contracts.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_costwise"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn artifact_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with(".manifest.txt") || !path.is_file() {
            continue;
        }
        out.insert(name, std::fs::read(&path).unwrap());
    }
    out
}

fn write_config(dir: &Path, out_dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(
        &path,
        format!(
            "out_dir = {}\n\
             seed = 91\n\
             n_patients = 140\n\
             signal_strength = 0.6\n\
             embed_dim = 8\n\
             emb_epochs = 4\n\
             hidden = 4\n\
             attn_latent = 4\n\
             attended_dim = 8\n\
             layers = 1\n\
             epochs = 2\n\
             patience = 2\n\
             shuffles = 3\n\
             group_by = entropy_quintile\n",
            out_dir.display()
        ),
    )
    .unwrap();
    path
}

fn full_pipeline(cfg: &Path) {
    let cfg = cfg.to_str().unwrap();
    run_ok(&["--config", cfg, "--serial", "generate"]);
    run_ok(&["--config", cfg, "--serial", "embed"]);
    run_ok(&["--config", cfg, "--serial", "stratify"]);
    run_ok(&["--config", cfg, "--serial", "train"]);
    run_ok(&["--config", cfg, "--serial", "evaluate"]);
    run_ok(&["--config", cfg, "--serial", "ablate", "--grid", "mode,embedding,attention"]);
}

#[test]
fn criterion_10_serial_reruns_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let dir_a = root.path().join("a");
    let dir_b = root.path().join("b");
    let cfg_a = write_config(root.path(), &dir_a);
    full_pipeline(&cfg_a);
    let cfg_b = {
        let p = root.path().join("run_b.cfg");
        let text = std::fs::read_to_string(&cfg_a)
            .unwrap()
            .replace(&dir_a.display().to_string(), &dir_b.display().to_string());
        std::fs::write(&p, text).unwrap();
        p
    };
    full_pipeline(&cfg_b);

    let a = artifact_bytes(&dir_a);
    let b = artifact_bytes(&dir_b);
    let names: Vec<&String> = a.keys().collect();
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "artifact sets differ"
    );
    // every pipeline stage left its artifact behind
    for expected in [
        "medical.csv",
        "pharmacy.csv",
        "labels.csv",
        "condition_map.csv",
        "table_dx_day.emb",
        "table_all_day.emb",
        "strata.csv",
        "model.ckpt",
        "train_log.csv",
        "predictions.csv",
        "attention.csv",
        "representations.csv",
        "report.csv",
        "report.json",
        "ablation.csv",
        "ablation_summary.json",
    ] {
        assert!(a.contains_key(expected), "missing artifact {expected}; have {names:?}");
    }
    // the 2x2x2 grid must report exactly eight cells
    let summary: serde_json::Value =
        serde_json::from_slice(&a["ablation_summary.json"]).unwrap();
    assert_eq!(summary.as_object().unwrap().len(), 8, "expected an 8-cell grid");
    let mut identical = 0;
    for (name, bytes) in &a {
        assert_eq!(bytes, &b[name], "artifact {name} differs between reruns");
        identical += 1;
    }
    println!(
        "[PASS] criterion 10: {identical} artifacts byte-identical across serial reruns"
    );
}

#[test]
fn evaluate_without_a_model_fails_cleanly() {
    let root = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--out-dir", root.path().to_str().unwrap(), "evaluate"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(
        msg.contains("model.ckpt") && msg.contains("not found"),
        "unhelpful error: {msg}"
    );
    // no partial report left behind
    assert!(!root.path().join("report.csv").exists());
}

#[test]
fn bad_severity_mix_names_the_field() {
    let root = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "--out-dir",
            root.path().to_str().unwrap(),
            "generate",
            "--n",
            "20",
            "--severity-mix",
            "0.2,0.2,0.2,0.1,0.1,0.1",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("severity_mix"), "error does not name the field: {msg}");
}

#[test]
fn missing_claims_name_the_path() {
    let root = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--out-dir", root.path().to_str().unwrap(), "embed"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("medical.csv"), "error does not name the missing path: {msg}");
}

/// The documented example workflow: a 2,000-patient cohort end to end.
#[test]
fn two_thousand_patient_pipeline_smoke() {
    let root = tempfile::tempdir().unwrap();
    let out_dir = root.path().join("out");
    let cfg = root.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "out_dir = {}\n\
             seed = 92\n\
             n_patients = 2000\n\
             signal_strength = 0.8\n\
             embed_dim = 12\n\
             emb_epochs = 8\n\
             hidden = 6\n\
             attn_latent = 6\n\
             attended_dim = 12\n\
             layers = 2\n\
             epochs = 3\n\
             patience = 3\n\
             shuffles = 3\n\
             group_by = severity\n",
            out_dir.display()
        ),
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    run_ok(&["--config", cfg, "generate"]);
    run_ok(&["--config", cfg, "embed"]);
    run_ok(&["--config", cfg, "stratify"]);
    run_ok(&["--config", cfg, "train"]);
    let out = run_ok(&["--config", cfg, "evaluate"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("model,shuffle,stratum"), "no report table:\n{text}");
    assert!(text.contains("mean_over_shuffles"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["group_by"], "severity");
    assert!(report["models"].as_array().unwrap().len() == 1);
}
