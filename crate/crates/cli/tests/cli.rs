use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsn-outlier"))
        .args(args)
        .env_remove("WSN_OUTLIER_OUT")
        .output()
        .expect("binary runs")
}

fn run_to(out: &Path, config: &Path, extra: &[&str]) -> Value {
    let mut args = vec![
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = cli(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

const TWO_NODE_HEAD: &str = r#"
algorithm = "global"
rating = "knn"
n = 1
[data]
kind = "two_node"
a = 30
b = 30
"#;

#[test]
fn two_node_run_sends_four_points() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_to(dir.path(), &scenarios().join("two-node.toml"), &[]);
    assert_eq!(s["points_sent_total"], 4);
    assert_eq!(s["accuracy"], 1.0);
    let csv = fs::read_to_string(dir.path().join("nodes.csv")).unwrap();
    assert!(csv.starts_with("# wsn-outlier nodes v1\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn centralized_with_sink_zero_relays_the_smaller_side() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_to(
        dir.path(),
        &scenarios().join("two-node.toml"),
        &["--algorithm", "centralized", "--sink", "0"],
    );
    assert_eq!(s["points_relayed"], 24);
}

#[test]
fn missing_config_exits_2() {
    let o = cli(&["run", "--config", "/nonexistent/scenario.toml", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_accepts_every_bundled_scenario() {
    for name in [
        "two-node.toml",
        "two-node-centralized.toml",
        "reference-10.toml",
        "lab-53.toml",
    ] {
        let path = scenarios().join(name);
        let o = cli(&["validate", "--config", path.to_str().unwrap()]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let printed = String::from_utf8(o.stdout).unwrap();
        assert!(printed.contains("algorithm ="), "{name}");
    }
}

#[test]
fn validate_rejects_a_disconnected_graph() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("far.toml");
    let body = format!(
        "{TWO_NODE_HEAD}[topology]\nkind = \"coords\"\nradio_range = 6.77\ncoords = [[0, 0.0, 0.0], [1, 50.0, 0.0]]\n"
    );
    fs::write(&path, body).unwrap();
    let o = cli(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("component"), "{err}");
}

#[test]
fn validate_rejects_knn_with_k_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k0.toml");
    let body = format!(
        "k = 0\n{TWO_NODE_HEAD}[topology]\nkind = \"coords\"\nradio_range = 6.77\ncoords = [[0, 0.0, 0.0], [1, 5.0, 0.0]]\n"
    );
    fs::write(&path, body).unwrap();
    let o = cli(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains('k'));
}

fn single_cell_sweep(dir: &Path) -> PathBuf {
    let path = dir.join("one.toml");
    let base = scenarios().join("reference-10.toml");
    let body = format!(
        "name = \"one\"\nbase = {:?}\nparam = \"w\"\nvalues = [20.0]\nrepeats = 1\n\n[[series]]\nlabel = \"global\"\nalgorithm = \"global\"\n",
        base.to_str().unwrap()
    );
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn single_cell_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = single_cell_sweep(dir.path());
    let out = dir.path().join("sweep");
    let o = cli(&[
        "sweep",
        "--config",
        sweep.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("one.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();

    let s = run_to(
        &dir.path().join("run"),
        &scenarios().join("reference-10.toml"),
        &["--w", "20"],
    );
    let intervals = s["intervals"].as_f64().unwrap();
    let per = |key: &str| s[key].as_f64().unwrap() / intervals;
    let cell = |i: usize| row[i].parse::<f64>().unwrap();
    assert_eq!(row[0], "20");
    assert_eq!(row[1], "global");
    assert_eq!(cell(2), per("avg_tx_J"));
    assert_eq!(cell(3), per("avg_rx_J"));
    assert_eq!(cell(4), per("min_J"));
    assert_eq!(cell(5), per("avg_J"));
    assert_eq!(cell(6), per("max_J"));
    assert_eq!(cell(7), s["accuracy"].as_f64().unwrap());
}

#[test]
fn sweep_output_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = single_cell_sweep(dir.path());
    let read = |sub: &str, jobs: &str| {
        let out = dir.path().join(sub);
        let o = cli(&[
            "sweep",
            "--config",
            sweep.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
        assert!(o.status.success());
        (
            fs::read(out.join("one.csv")).unwrap(),
            fs::read(out.join("one.totals.csv")).unwrap(),
        )
    };
    assert_eq!(read("a", "1"), read("b", "2"));
}

#[test]
fn run_output_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenarios().join("reference-10.toml");
    let files = |sub: &str| {
        let out = dir.path().join(sub);
        run_to(&out, &config, &["--p-drop", "0.02", "--seed", "11"]);
        (
            fs::read(out.join("nodes.csv")).unwrap(),
            fs::read(out.join("summary.json")).unwrap(),
        )
    };
    assert_eq!(files("a"), files("b"));
}

#[test]
fn invalid_override_is_a_config_error() {
    let path = scenarios().join("two-node.toml");
    let o = cli(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--p-drop",
        "1.5",
        "--out",
        "/tmp/never",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
