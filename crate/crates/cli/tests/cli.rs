use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_forest-gtr"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn values(csv: &str) -> Vec<f64> {
    csv.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("node"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn exact_on_path_graph() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "p3.txt", "0 1\n1 2\n");
    let y = write(dir.path(), "y.txt", "8\n0\n0\n");
    let out = dir.path().join("x.csv");
    let o = run(&["exact", "--graph", g.to_str().unwrap(), "--signal", y.to_str().unwrap(), "--q", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let x = values(&std::fs::read_to_string(&out).unwrap());
    for (a, b) in x.iter().zip([5.0, 2.0, 1.0]) {
        assert!((a - b).abs() < 1e-9, "{x:?}");
    }
}

#[test]
fn smoothing_a_constant_returns_it_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for alpha in ["safe", "empirical", "0.9"] {
        let o = run(&["smooth", "--gen", "ba:100:3", "--signal-gen", "constant:0.3", "--n-samples", "17", "--alpha", alpha]);
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(values(&text).iter().all(|&v| v == 0.3), "{alpha}");
        if alpha == "empirical" {
            assert!(text.contains("# alpha_fallback"));
        }
    }
    let y = write(dir.path(), "c.txt", "2.5\n2.5\n2.5\n");
    let g = write(dir.path(), "p3.txt", "0 1\n1 2\n");
    let o = run(&["smooth", "--graph", g.to_str().unwrap(), "--signal", y.to_str().unwrap(), "--format", "json", "--alpha", "oracle"]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["schema"], "1");
    assert_eq!(doc["estimate"], serde_json::json!([2.5, 2.5, 2.5]));
    assert_eq!(doc["diagnostics"]["alpha_fallback"], true);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let cases: Vec<Vec<&str>> = vec![
        vec!["gen-graph", "--gen", "regular:200:6", "--seed", "4"],
        vec!["smooth", "--gen", "knn:150:5", "--signal-gen", "normal", "--n-samples", "300", "--alpha", "empirical", "--seed", "2"],
        vec!["sweep-alpha", "--gen", "ba:150:3", "--realizations", "20", "--seed", "5", "--format", "json"],
        vec!["denoise", "--gen", "grid:8:8", "--realizations", "3", "--q-grid", "log:0.1:10:3", "--seed", "6"],
        vec!["ssl", "--gen", "cliques:2:10", "--labels-per-class", "1,2", "--repeats", "5", "--n-samples", "20", "--seed", "7"],
    ];
    for args in cases {
        let reference = run(&args);
        assert!(reference.status.success(), "{args:?}: {}", String::from_utf8_lossy(&reference.stderr));
        for threads in ["1", "3"] {
            let mut with_threads = vec!["--threads", threads];
            with_threads.extend(&args);
            let again = run(&with_threads);
            assert_eq!(again.stdout, reference.stdout, "{args:?} with {threads} threads");
        }
    }
}

#[test]
fn ssl_single_run_with_labeled_file() {
    let dir = tempfile::tempdir().unwrap();
    let labeled = write(dir.path(), "labeled.txt", "0\n25\n");
    let o = run(&["ssl", "--gen", "cliques:2:20", "--labeled", labeled.to_str().unwrap(), "--alpha", "exact"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# method=exact accuracy=1.0\nnode,predicted,score_0,score_1\n"), "{text}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // usage errors
    assert_eq!(run(&["exact"]).status.code(), Some(2));
    assert_eq!(run(&["exact", "--gen", "torus:3:3", "--signal-gen", "normal"]).status.code(), Some(2));
    assert_eq!(run(&["smooth", "--gen", "grid:3:3", "--signal-gen", "normal", "--alpha", "big"]).status.code(), Some(2));
    assert_eq!(run(&["exact", "--gen", "grid:3:3"]).status.code(), Some(2));
    // data errors
    let missing = dir.path().join("missing.txt");
    assert_eq!(run(&["exact", "--graph", missing.to_str().unwrap(), "--signal-gen", "normal"]).status.code(), Some(3));
    let disconnected = write(dir.path(), "d.txt", "0 1\n2 3\n");
    assert_eq!(run(&["exact", "--graph", disconnected.to_str().unwrap(), "--signal-gen", "normal"]).status.code(), Some(3));
    let g = write(dir.path(), "p3.txt", "0 1\n1 2\n");
    let short = write(dir.path(), "y.txt", "1\n2\n");
    assert_eq!(run(&["exact", "--graph", g.to_str().unwrap(), "--signal", short.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(run(&["exact", "--graph", g.to_str().unwrap(), "--signal-gen", "normal", "--q=-1"]).status.code(), Some(3));
    assert_eq!(run(&["smooth", "--gen", "grid:4:4", "--signal-gen", "normal", "--alpha", "oracle"]).status.code(), Some(3));
}
