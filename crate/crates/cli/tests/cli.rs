use std::path::Path;
use std::process::{Command, Output};

fn wincuckoo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wincuckoo"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn build_reaches_design_load_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["build", "-n", "100000", "--variant", "windowed", "-l", "2", "-k", "10", "-o"];
    let a = wincuckoo(&[&args[..], &["a.wck"]].concat(), d);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = wincuckoo(&[&args[..], &["b.wck"]].concat(), d);
    assert!(b.status.success());
    assert_eq!(std::fs::read(d.join("a.wck")).unwrap(), std::fs::read(d.join("b.wck")).unwrap());

    let stats = json(&d.join("a.stats.json"));
    let load = stats["achieved_load"].as_f64().unwrap();
    assert!((load - 0.98 * 0.9649).abs() < 0.005, "load {load}");
    assert_eq!(stats["failures"], 0);
    assert!(stats["actual_overhead"].as_f64().unwrap() < 1.28);
}

#[test]
fn parallel_build_matches_sequential_file_layout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for name in ["p1.wck", "p2.wck"] {
        let out = wincuckoo(&["build", "-n", "50000", "-F", "3", "--seed", "9", "-o", name], d);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(d.join("p1.wck")).unwrap(), std::fs::read(d.join("p2.wck")).unwrap());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        &["build", "--load-fraction", "1.2", "-o", "x"][..],
        &["build", "-k", "40", "-o", "x"],
        &["build", "-l", "3", "-o", "x"],
        &["build", "--variant", "cubic", "-o", "x"],
        &["frobnicate"],
    ] {
        let out = wincuckoo(args, d);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    assert!(!d.join("x").exists());
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = wincuckoo(&["build", "--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in [
        "[default: windowed]",
        "[default: 2]",
        "[default: 10]",
        "[default: 1000000]",
        "[default: 0.98]",
        "[default: 10000]",
        "[default: 1]",
        "[default: 0]",
    ] {
        assert!(text.contains(needle), "missing {needle}:\n{text}");
    }
}

#[test]
fn query_own_keys_and_disjoint_keys() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(wincuckoo(&["gen-keys", "-n", "20000", "--seed", "4", "--text", "-o", "keys.txt"], d).status.success());
    assert!(wincuckoo(&["gen-keys", "-n", "200000", "--seed", "4", "--query", "-o", "miss.bin"], d).status.success());
    let build = wincuckoo(&["build", "-n", "20000", "-i", "keys.txt", "--text", "-o", "f.wck"], d);
    assert!(build.status.success());

    let out = wincuckoo(&["query", "-f", "f.wck", "-i", "keys.txt", "--text"], d);
    assert!(out.status.success());
    let lines: Vec<_> = String::from_utf8(out.stdout).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 20000);
    assert!(lines.iter().all(|l| l == "1"));

    let out = wincuckoo(&["query", "-f", "f.wck", "-i", "miss.bin", "--summary", "-t", "4"], d);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rate = summary["positive_fraction"].as_f64().unwrap();
    assert!(rate > 0.0 && rate < 2.0 / 1024.0, "rate {rate}");
}

#[test]
fn io_and_format_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("keys.bin"), [0u8; 16]).unwrap();
    assert_eq!(wincuckoo(&["query", "-f", "missing.wck", "-i", "keys.bin"], d).status.code(), Some(3));
    std::fs::write(d.join("junk.wck"), b"not a filter at all").unwrap();
    assert_eq!(wincuckoo(&["query", "-f", "junk.wck", "-i", "keys.bin"], d).status.code(), Some(3));
    assert_eq!(wincuckoo(&["inspect", "junk.wck"], d).status.code(), Some(3));
    std::fs::write(d.join("ragged.bin"), [0u8; 5]).unwrap();
    assert_eq!(wincuckoo(&["build", "-n", "100", "-i", "ragged.bin", "-o", "x"], d).status.code(), Some(3));
}

#[test]
fn overfull_build_exits_two_with_stats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(wincuckoo(&["gen-keys", "-n", "5000", "-o", "keys.bin"], d).status.success());
    let out = wincuckoo(&["build", "-n", "1000", "-i", "keys.bin", "--max-walk", "50", "-o", "f.wck"], d);
    assert_eq!(out.status.code(), Some(2));
    let stats = json(&d.join("f.stats.json"));
    assert!(stats["failures"].as_u64().unwrap() > 0);
    let inspect = wincuckoo(&["inspect", "f.wck"], d);
    assert!(inspect.status.success());
}

#[test]
fn xor_rounding_warns() {
    let dir = tempfile::tempdir().unwrap();
    let out = wincuckoo(&["build", "--variant", "xor", "-n", "100000", "-o", "x.wck"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn fpr_experiment_grid_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = wincuckoo(
        &["experiment", "fpr", "-n", "5000", "--queries", "20000", "--seed", "3", "--out-dir", "res"],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = wincuckoo::workload::read_records(&d.join("res/fpr-seed3.csv")).unwrap();
    assert_eq!(rows.len(), 5 * 3);
    assert!(d.join("res/fpr-seed3.json").exists());
    assert!(rows.iter().all(|r| r.empirical_fpr.is_some()));
}

#[test]
fn walk_hist_and_time_memory_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = wincuckoo(&["experiment", "walk-hist", "-n", "20000", "--out-dir", "res"], d);
    assert!(out.status.success());
    assert!(d.join("res/walk-hist-bins-seed0.csv").exists());
    let rows = wincuckoo::workload::read_records(&d.join("res/walk-hist-seed0.csv")).unwrap();
    assert!(rows.iter().all(|r| r.zero_eviction_fraction > 0.5));

    let out = wincuckoo(
        &["experiment", "time-memory", "-n", "20000", "--variants", "bucketed,windowed", "--out-dir", "res"],
        d,
    );
    assert!(out.status.success());
    let rows = wincuckoo::workload::read_records(&d.join("res/time-memory-seed0.csv")).unwrap();
    assert_eq!(rows.len(), 12);
    for (b, w) in rows[..6].iter().zip(&rows[6..]) {
        assert_eq!(b.memory_bytes, w.memory_bytes);
    }
}

#[test]
fn bench_prints_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for mode in ["insert", "lookup-hit", "lookup-miss", "lookup-mixed"] {
        let out = wincuckoo(&["bench", "--mode", mode, "-n", "20000", "-t", "2", "-o", "b.json"], d);
        assert!(out.status.success(), "{mode}");
        let rec = json(&d.join("b.json"));
        assert_eq!(rec["mode"], mode);
    }
}
