use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bregvr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bregvr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const QUAD_LINEAR: &str = r#"
instance = "strongly-convex-quad"
replications = 4
output_dir = "out"
[solver]
gamma = 0.1
theta = 0
stages = 6
seed = 11
"#;

fn parse_csv(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect()
}

#[test]
fn zero_stages_gives_header_only() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "c.toml",
        "instance = \"quad-1d\"\n[solver]\ngamma = 0.05\ntheta = 1\nm = 4\nstages = 0\n",
    );
    let out = bregvr(&["run", "--config", &config]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert_eq!(trace, "replication,stage,gap_pair,ergodic_gap,bregman_dist,bound,wall_ms\n");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "c.toml", QUAD_LINEAR);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for target in [&a, &b] {
        let out = bregvr(&["run", "--config", &config, "--output", target.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(fs::read(a.join("trace.csv")).unwrap(), fs::read(b.join("trace.csv")).unwrap());
}

#[test]
fn summary_matches_trace_rows() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "c.toml", QUAD_LINEAR);
    let out = bregvr(&["run", "--config", &config]);
    assert_eq!(out.status.code(), Some(0));

    let rows = parse_csv(&dir.path().join("out/trace.csv"));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"], serde_json::json!([11, 12, 13, 14]));
    assert_eq!(summary["instance_hash"].as_str().unwrap().len(), 16);
    assert_eq!(rows.len(), 1 + 4 * 6);

    // Rows are ordered by (replication, stage).
    let keys: Vec<(usize, usize)> = rows[1..].iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);

    for (s, stage) in summary["stages"].as_array().unwrap().iter().enumerate() {
        for (column, name) in [(2, "gap_pair"), (3, "ergodic_gap"), (4, "bregman_dist")] {
            let values: Vec<f64> = rows[1..]
                .iter()
                .filter(|r| r[1] == (s + 1).to_string())
                .map(|r| r[column].parse().unwrap())
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
            let reported = &stage[name];
            assert!((reported["mean"].as_f64().unwrap() - mean).abs() <= 1e-12 * mean.abs().max(1e-300));
            assert!((reported["std"].as_f64().unwrap() - std).abs() <= 1e-12 * mean.abs().max(1e-300));
        }
    }
}

#[test]
fn certify_surfaces_the_reference_examples() {
    let dir = TempDir::new().unwrap();
    let constants = "[certify_constants]\nl1 = 1.0\nl2 = 1.0\nmu0 = 1.0\nk_norm = 1.0\nalpha = 2.0\n";

    let boundary = write_config(
        dir.path(),
        "boundary.toml",
        &format!("instance = \"quad-1d\"\n[solver]\ngamma = 0.08333333333333333\ntheta = 1\nm = 10\nstages = 1\n{constants}"),
    );
    let out = bregvr(&["certify", "--config", &boundary]);
    assert_eq!(out.status.code(), Some(2));
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["certificate"]["regime"], "ergodic");
    assert_eq!(json["certificate"]["cond_a"], false);

    let small = write_config(
        dir.path(),
        "small.toml",
        &format!("instance = \"quad-1d\"\n[solver]\ngamma = 0.05\ntheta = 1\nm = 10\nstages = 1\n{constants}"),
    );
    let out = bregvr(&["certify", "--config", &small]);
    assert_eq!(out.status.code(), Some(0));
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["certificate"]["cond_a"], true);
    assert_eq!(json["certificate"]["cond_b"], true);

    let linear = write_config(
        dir.path(),
        "linear.toml",
        &format!("instance = \"quad-1d\"\nm_prime = 2.0\n[solver]\ngamma = 0.1\ntheta = 0\nstages = 1\n{constants}"),
    );
    let out = bregvr(&["certify", "--config", &linear]);
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    let cert = &json["certificate"];
    assert_eq!(cert["regime"], "linear");
    for (field, expected) in [("alpha_prime", 1.0), ("tau", 1.1), ("eta", 0.04), ("lambda", 1.4)] {
        assert!((cert[field].as_f64().unwrap() - expected).abs() < 1e-12, "{field}");
    }
    assert_eq!(cert["m_min"], 4);
    assert!((cert["gamma_max"].as_f64().unwrap() - (1.25f64.sqrt() - 1.0)).abs() < 1e-12);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn malformed_config_exits_4() {
    let dir = TempDir::new().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "instance = \"quad-1d\"\n[solver]\ngamma = \"fast\"\n");
    assert_eq!(bregvr(&["run", "--config", &bad]).status.code(), Some(4));
    assert_eq!(bregvr(&["certify", "--config", &bad]).status.code(), Some(4));
    let missing = dir.path().join("absent.toml");
    assert_eq!(bregvr(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(4));
    let unknown = write_config(
        dir.path(),
        "unknown.toml",
        "instance = \"no-such\"\n[solver]\ngamma = 0.1\ntheta = 1\nm = 2\nstages = 1\n",
    );
    assert_eq!(bregvr(&["run", "--config", &unknown]).status.code(), Some(4));
}

#[test]
fn rejected_certificate_exits_2_unless_overridden() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "c.toml",
        "instance = \"quad-1d\"\n[solver]\ngamma = 0.5\ntheta = 1\nm = 5\nstages = 3\n",
    );
    let out = bregvr(&["run", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out/trace.csv").exists());

    let out = bregvr(&["run", "--config", &config, "--unsafe-override"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(parse_csv(&dir.path().join("out/trace.csv")).len(), 4);
}

#[test]
fn divergence_exits_3_with_truncated_trace() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "c.toml",
        "instance = \"quad-1d\"\nreplications = 2\n[solver]\ngamma = 50.0\ntheta = 1\nm = 20\nstages = 10\n",
    );
    let out = bregvr(&["run", "--config", &config, "--unsafe-override"]);
    assert_eq!(out.status.code(), Some(3));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    let errors = summary["errors"].as_array().unwrap();
    assert_eq!(errors.len(), 2);
    assert_eq!(errors[0]["kind"], "divergence");
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(!trace.contains("NaN") && !trace.contains("inf"));
}

#[test]
fn flags_override_config() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "c.toml", QUAD_LINEAR);
    let out = bregvr(&["run", "--config", &config, "--seed", "100", "--stages", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"], serde_json::json!([100, 101, 102, 103]));
    assert_eq!(summary["stages"].as_array().unwrap().len(), 2);
}

#[test]
fn oracle_is_saved_and_reused() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "c.toml",
        "instance = \"lasso-saddle\"\noracle = \"high-accuracy-deterministic\"\n[solver]\ngamma = 0.01\ntheta = 1\nm = 5\nstages = 2\n",
    );
    let saved = dir.path().join("saved");
    let out = bregvr(&["oracle", "--config", &config, "--output", saved.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(printed["residual"].as_f64().unwrap() <= 1e-8);
    let file: Value = serde_json::from_str(&fs::read_to_string(saved.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(printed, file);

    let reuse = write_config(
        dir.path(),
        "reuse.toml",
        "instance = \"lasso-saddle\"\noracle_file = \"saved/oracle.json\"\n[solver]\ngamma = 0.01\ntheta = 1\nm = 5\nstages = 2\n",
    );
    let out = bregvr(&["run", "--config", &reuse, "--unsafe-override"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["saddle"], file);
}

#[test]
fn instance_files_are_accepted() {
    let dir = TempDir::new().unwrap();
    let spec = bregvr::builtin("rps-game").unwrap();
    fs::write(dir.path().join("game.json"), spec.canonical_json()).unwrap();
    let config = write_config(
        dir.path(),
        "c.toml",
        "instance = \"game.json\"\n[solver]\ngamma = 0.1\ntheta = 1\nm = 10\nstages = 3\n",
    );
    let out = bregvr(&["run", "--config", &config]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["instance_hash"], spec.hash());
}

#[test]
fn list_instances_names_every_builtin() {
    let out = bregvr(&["list-instances"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in bregvr::BUILTIN_NAMES {
        assert!(text.contains(name), "{name} missing");
    }
}
