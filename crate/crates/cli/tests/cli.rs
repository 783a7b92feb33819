use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use poolcheck::io::write_csv;
use poolcheck::pooltest::pooling_test;
use poolcheck::regress::summarize;
use poolcheck::sim::{generate_confounded, generate_shared_beta, generate_sparse_with, SparseDesign, SparsePattern};
use poolcheck::PoolingTestResult;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poolcheck"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json<T: serde::de::DeserializeOwned>(out: &Output) -> T {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn write_sites(dir: &Path, n: usize, seed: u64) -> (Vec<PathBuf>, Vec<poolcheck::SiteDataset>) {
    let draw = generate_shared_beta(n, seed).unwrap();
    let paths = draw
        .sites
        .iter()
        .map(|s| {
            let p = dir.join(format!("{}.csv", s.site_id));
            write_csv(s, &p, "y").unwrap();
            p
        })
        .collect();
    (paths, draw.sites.to_vec())
}

#[test]
fn summary_files_reproduce_the_in_memory_test() {
    let dir = tempfile::tempdir().unwrap();
    let (csvs, sites) = write_sites(dir.path(), 64, 3);
    let mut jsons = Vec::new();
    for csv in &csvs {
        let out_path = csv.with_extension("json");
        let out = run(&["fit-site", path_str(csv), "--out", path_str(&out_path)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        jsons.push(out_path);
    }
    let out = run(&["--json", "pool-test", path_str(&jsons[0]), path_str(&jsons[1])]);
    let got: PoolingTestResult = stdout_json(&out);
    let summaries: Vec<_> = sites.iter().map(|s| summarize(s).unwrap()).collect();
    let want = pooling_test(&summaries, 0.05, None).unwrap();
    assert_eq!(got, want);
    assert_eq!(got.statistic.to_bits(), want.statistic.to_bits());
}

#[test]
fn confounded_sites_use_the_subset_path() {
    let dir = tempfile::tempdir().unwrap();
    let draw = generate_confounded(80, 4).unwrap();
    let mut jsons = Vec::new();
    for s in &draw.sites {
        let csv = dir.path().join(format!("{}.csv", s.site_id));
        write_csv(s, &csv, "y").unwrap();
        let js = dir.path().join(format!("{}.json", s.site_id));
        let out = run(&[
            "fit-site",
            path_str(&csv),
            "--confounds",
            "z1,z2,z3,z4,z5",
            "--out",
            path_str(&js),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        jsons.push(js);
    }
    let out = run(&["--json", "pool-test", "--subset", path_str(&jsons[0]), path_str(&jsons[1])]);
    let got: PoolingTestResult = stdout_json(&out);
    assert!(got.used_conditional);
    assert_eq!(got.df, 3);

    let out = run(&["--json", "pool-test", "--reference", "1", path_str(&jsons[0]), path_str(&jsons[1])]);
    let swapped: PoolingTestResult = stdout_json(&out);
    assert_eq!(swapped.site_ids, vec!["site2".to_string(), "site1".to_string()]);
}

#[test]
fn subset_mode_needs_conditional_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let (csvs, _) = write_sites(dir.path(), 32, 5);
    let mut jsons = Vec::new();
    for csv in &csvs {
        let js = csv.with_extension("json");
        assert!(run(&["fit-site", path_str(csv), "-o", path_str(&js)]).status.success());
        jsons.push(js);
    }
    let out = run(&["pool-test", "--subset", path_str(&jsons[0]), path_str(&jsons[1])]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    // Usage errors.
    assert_eq!(run(&["pool-test"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));

    // Data errors: missing file, malformed CSV, tampered summary.
    let missing = dir.path().join("missing.csv");
    let out_json = dir.path().join("o.json");
    assert_eq!(
        run(&["fit-site", path_str(&missing), "-o", path_str(&out_json)]).status.code(),
        Some(3)
    );
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,y\n1,2\n3,oops\n").unwrap();
    let out = run(&["fit-site", path_str(&bad), "-o", path_str(&out_json)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    // Numerical error: duplicated predictor column.
    let dup = dir.path().join("dup.csv");
    let mut text = String::from("a,b,y\n");
    for i in 0..20 {
        let v = i as f64 * 0.37 - 2.0;
        text.push_str(&format!("{v},{v},{}\n", (i * 7 % 5) as f64));
    }
    std::fs::write(&dup, text).unwrap();
    assert_eq!(
        run(&["fit-site", path_str(&dup), "-o", path_str(&out_json)]).status.code(),
        Some(4)
    );

    let (csvs, _) = write_sites(dir.path(), 32, 6);
    let js = dir.path().join("a.json");
    assert!(run(&["fit-site", path_str(&csvs[0]), "-o", path_str(&js)]).status.success());
    let text = std::fs::read_to_string(&js).unwrap().replace("\"n\":32", "\"n\":33");
    std::fs::write(&js, text).unwrap();
    assert_eq!(run(&["pool-test", path_str(&js), path_str(&js)]).status.code(), Some(3));
}

#[test]
fn mse_bounds_and_sparse_eigenvalues_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let (csvs, _) = write_sites(dir.path(), 40, 7);
    let mut jsons = Vec::new();
    for csv in &csvs {
        let js = csv.with_extension("json");
        assert!(run(&["fit-site", path_str(csv), "-o", path_str(&js)]).status.success());
        jsons.push(js);
    }
    let v: serde_json::Value = stdout_json(&run(&["--json", "mse-bounds", path_str(&jsons[0]), path_str(&jsons[1])]));
    assert!(v["bounds"]["var_reduction"].as_f64().unwrap() > 0.0);

    let v: serde_json::Value = stdout_json(&run(&[
        "--json",
        "msparse-eigen",
        path_str(&csvs[0]),
        path_str(&csvs[1]),
        "--m",
        "2",
    ]));
    assert_eq!(v["exhaustive"], serde_json::Value::Bool(true));
    assert!(v["phi_min"].as_f64().unwrap() <= v["phi_max"].as_f64().unwrap());
}

#[test]
fn lasso_commands_fit_and_trace_paths() {
    let dir = tempfile::tempdir().unwrap();
    let design = SparseDesign {
        n: 60,
        p: 80,
        ..SparseDesign::new(SparsePattern::MostShared)
    };
    let draw = generate_sparse_with(&design, 2).unwrap();
    let csvs: Vec<PathBuf> = draw
        .sites
        .iter()
        .map(|s| {
            let p = dir.path().join(format!("{}.csv", s.site_id));
            write_csv(s, &p, "y").unwrap();
            p
        })
        .collect();
    let mut args = vec!["--json", "lasso-fit"];
    args.extend(csvs.iter().map(|p| path_str(p)));
    let coef = dir.path().join("coef.csv");
    args.extend(["--alpha", "0.5", "--lambda", "20", "--out", path_str(&coef)]);
    let v: serde_json::Value = stdout_json(&run(&args));
    assert_eq!(v["converged"], serde_json::Value::Bool(true));
    assert_eq!(std::fs::read_to_string(&coef).unwrap().lines().count(), 5);

    let mut args = vec!["--json", "lasso-path"];
    args.extend(csvs.iter().map(|p| path_str(p)));
    let table = dir.path().join("path.csv");
    args.extend(["--alpha", "0.5", "--n-lambdas", "10", "--cv-folds", "3", "--out", path_str(&table)]);
    let v: serde_json::Value = stdout_json(&run(&args));
    assert_eq!(v["lambdas"].as_array().unwrap().len(), 10);
    assert!(v["best_lambda"].as_f64().is_some());
    assert_eq!(std::fs::read_to_string(&table).unwrap().lines().count(), 11);
}

#[test]
fn simulate_is_deterministic_and_writes_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&[
            "--json",
            "simulate",
            "--scenario",
            "shared-beta",
            "--seed",
            "11",
            "--replicates",
            "20",
            "--n-grid",
            "16,64",
            "--out-dir",
            path_str(dir.path()),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["shared-beta_power.csv", "shared-beta_mse.svg", "shared-beta_acceptance.svg"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    assert_eq!(
        run(&["simulate", "--scenario", "bogus", "--out-dir", path_str(a.path())]).status.code(),
        Some(3)
    );
}
