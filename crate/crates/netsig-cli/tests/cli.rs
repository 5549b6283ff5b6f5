//! End-to-end checks of the netsig binary: exit codes, file outputs, and
//! byte-identical reruns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn netsig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsig"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("netsig-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn karate_path(dir: &Path) -> String {
    let path = dir.join("karate.edges");
    std::fs::write(&path, netsig::assets::KARATE_EDGES).unwrap();
    path.display().to_string()
}

#[test]
fn gravity_without_coords_is_usage_error() {
    let dir = workdir("grav");
    let karate = karate_path(&dir);
    let out = netsig(&[
        "fit",
        "--graph",
        &karate,
        "--null",
        "gravity",
        "--out",
        dir.join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let doc: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(doc["kind"], "usage");
}

#[test]
fn unknown_pattern_is_usage_error() {
    let dir = workdir("pattern");
    let karate = karate_path(&dir);
    let out = netsig(&[
        "test",
        "--graph",
        &karate,
        "--null",
        "er",
        "--pattern",
        "nonsense",
        "--out",
        dir.join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_er_reports_density() {
    let dir = workdir("fit");
    let karate = karate_path(&dir);
    let model_path = dir.join("er.json");
    let out = netsig(&[
        "fit",
        "--graph",
        &karate,
        "--null",
        "er",
        "--out",
        model_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model_path).unwrap()).unwrap();
    assert_eq!(doc["kind"], "er");
    let p = doc["p"].as_f64().unwrap();
    assert!((p - 156.0 / 1122.0).abs() < 1e-12);
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = workdir("gen");
    for run in ["a", "b"] {
        let out = netsig(&[
            "generate",
            "--kind",
            "ppm",
            "--sizes",
            "20,20,20",
            "--p-in",
            "0.8",
            "--p-out",
            "0.2",
            "--seed",
            "7",
            "--out",
            dir.join(run).to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(dir.join("a.edges")).unwrap();
    let b = std::fs::read(dir.join("b.edges")).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical edge lists");
    assert!(dir.join("a.labels.csv").exists());
}

#[test]
fn test_command_output_is_reproducible() {
    let dir = workdir("test");
    let karate = karate_path(&dir);
    for name in ["r1.json", "r2.json"] {
        let out = netsig(&[
            "test",
            "--graph",
            &karate,
            "--null",
            "er",
            "--pattern",
            "assortative",
            "--groups",
            "2",
            "--replicas",
            "15",
            "--restarts",
            "3",
            "--seed",
            "11",
            "--out",
            dir.join(name).to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let r1 = std::fs::read(dir.join("r1.json")).unwrap();
    let r2 = std::fs::read(dir.join("r2.json")).unwrap();
    assert_eq!(r1, r2, "identical invocations must be byte-identical");

    let doc: serde_json::Value = serde_json::from_slice(&r1).unwrap();
    assert!(doc["p_value"].as_f64().unwrap() >= 1.0 / 16.0);
    assert_eq!(doc["z_null"].as_array().unwrap().len(), 15);
    assert_eq!(doc["labels"].as_array().unwrap().len(), 34);
    assert_eq!(doc["seeds"]["master"], 11);
}

#[test]
fn left_tail_flag_is_honored() {
    let dir = workdir("tail");
    let karate = karate_path(&dir);
    let out_path = dir.join("left.json");
    let out = netsig(&[
        "test",
        "--graph",
        &karate,
        "--null",
        "er",
        "--pattern",
        "repulsive",
        "--replicas",
        "10",
        "--restarts",
        "2",
        "--tail",
        "left",
        "--seed",
        "4",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(doc["tail"], "left");
}

#[test]
fn detect_finds_the_barbell_partition() {
    let dir = workdir("detect");
    let barbell = dir.join("barbell.edges");
    std::fs::write(&barbell, "0 1\n0 2\n1 2\n3 4\n3 5\n4 5\n2 3\n").unwrap();
    let out_path = dir.join("d.json");
    let out = netsig(&[
        "detect",
        "--graph",
        barbell.to_str().unwrap(),
        "--null",
        "er",
        "--pattern",
        "assortative",
        "--groups",
        "2",
        "--seed",
        "5",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let z = doc["z"].as_f64().unwrap();
    assert!((z - 4.756704618131304).abs() < 1e-9, "z = {z}");
    let labels: Vec<u64> = doc["labels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(labels[0], labels[1]);
    assert_eq!(labels[0], labels[2]);
    assert_eq!(labels[3], labels[4]);
    assert_eq!(labels[3], labels[5]);
    assert_ne!(labels[0], labels[3]);
}

#[test]
fn eigen_writes_unit_columns() {
    let dir = workdir("eigen");
    let karate = karate_path(&dir);
    let csv_path = dir.join("eig.csv");
    let out = netsig(&[
        "eigen",
        "--graph",
        &karate,
        "--rank",
        "2",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('e'))
        .collect();
    assert_eq!(rows.len(), 34);
    let mut norms = [0.0f64; 2];
    for row in rows {
        let vals: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        norms[0] += vals[0] * vals[0];
        norms[1] += vals[1] * vals[1];
    }
    assert!((norms[0] - 1.0).abs() < 1e-8);
    assert!((norms[1] - 1.0).abs() < 1e-8);
}

#[test]
fn sweep_writes_expected_columns() {
    let dir = workdir("sweep");
    let spec = serde_json::json!({
        "generator": { "kind": "ppm", "sizes": [8, 8], "p_in": 0.9, "p_out": 0.05 },
        "sweep": { "param": "p_out", "values": [0.05] },
        "networks_per_point": 2,
        "null": { "kind": "er" },
        "pattern": { "assortative": { "groups": 2 } },
        "replicas": 9,
        "alpha": 0.05,
        "seed": 3,
        "anneal": { "restarts": 2, "sweeps": 200, "stall_sweeps": 50 }
    });
    let spec_path = dir.join("exp.json");
    std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let csv_path = dir.join("out.csv");
    let out = netsig(&[
        "sweep",
        "--experiment",
        spec_path.to_str().unwrap(),
        "--out",
        csv_path.to_str().unwrap(),
        "--cells-dir",
        dir.join("cells").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let header = text
        .lines()
        .find(|l| !l.starts_with('#'))
        .expect("has header");
    assert_eq!(
        header,
        "p_out,mean_p,median_p,reject_frac,mean_z_obs,n_networks,n_failures"
    );
    assert_eq!(std::fs::read_dir(dir.join("cells")).unwrap().count(), 2);
}
