use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clmds::io::{load_features, parse_coords_csv, parse_table};
use clmds::{run, Input, Metric};
use clmds_cli::output::read_run;
use clmds_cli::RunConfig;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clmds")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_line(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    serde_json::from_str(err.trim_end()).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn holes(dir: &Path) -> PathBuf {
    ok(&bin(&["datagen", "holes", "--seed", "1", "--output-dir", "data"], dir));
    dir.join("data/features.csv")
}

#[test]
fn holes_run_writes_three_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    holes(tmp.path());
    let out = ok(&bin(
        &[
            "embed",
            "--set",
            "input.path=data/features.csv",
            "--set",
            "clmds.hierarchy=[12, 1]",
            "--output-dir",
            "run",
            "--plot",
        ],
        tmp.path(),
    ));
    assert_eq!(out["rows"], 1000);
    let run = tmp.path().join("run");
    let mut names: Vec<String> =
        fs::read_dir(&run).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["coords.csv", "plot.svg", "result.json"]);

    let coords = fs::read_to_string(run.join("coords.csv")).unwrap();
    assert!(!coords.contains('\r'));
    assert_eq!(coords.lines().count(), 1001);
    let rows = parse_coords_csv(&coords).unwrap();
    assert_eq!(rows.iter().filter(|r| r.is_medoid).count(), 12);
    assert!(rows.iter().all(|r| !r.is_estimated));

    let svg = fs::read_to_string(run.join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<circle").count() + svg.matches("<polygon").count(), 1000);
    assert!(!svg.contains("<text") && !svg.contains("<line"));

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("result.json")).unwrap()).unwrap();
    let levels = json["summary"]["levels"].as_array().unwrap();
    // the single root cluster has no anchors or transforms of its own
    assert_eq!(levels.len(), 1);
    assert_eq!(levels[0]["medoids"].as_array().unwrap().len(), 12);
    assert!(json["timings"]["embed"].as_f64().unwrap() >= 0.0);

    let m = ok(&bin(&["metrics", "voronoi", "run"], tmp.path()));
    let c = m["containment"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&c));
}

#[test]
fn cur_sparsification_partitions_rows() {
    let tmp = tempfile::tempdir().unwrap();
    holes(tmp.path());
    ok(&bin(
        &[
            "embed",
            "--set",
            "input.path=data/features.csv",
            "--set",
            "clmds.hierarchy=[12,1]",
            "--set",
            "clmds.sparsify=cur",
            "--set",
            "clmds.n_sparse=200",
            "--output-dir",
            "run",
        ],
        tmp.path(),
    ));
    let rows = parse_coords_csv(&fs::read_to_string(tmp.path().join("run/coords.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1000);
    assert_eq!(rows.iter().filter(|r| !r.is_estimated).count(), 200);
    assert_eq!(rows.iter().filter(|r| r.is_estimated).count(), 800);
}

#[test]
fn malformed_distances_leave_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.txt"), "0 1 2\n1 0\n2 1 0\n").unwrap();
    fs::write(tmp.path().join("asym.txt"), "0 1\n2 0\n").unwrap();
    for file in ["bad.txt", "asym.txt", "missing.txt"] {
        let out = bin(
            &["embed", "--set", "input.kind=distances", "--set", &format!("input.path={file}"), "--output-dir", "run"],
            tmp.path(),
        );
        let err = error_line(&out);
        assert!(err["error"].is_string() && err["message"].is_string());
        assert!(!tmp.path().join("run").exists(), "{file}");
    }
    let err = error_line(&bin(
        &["embed", "--set", "input.kind=distances", "--set", "input.path=asym.txt", "--output-dir", "run"],
        tmp.path(),
    ));
    assert_eq!(err["error"], "asymmetric");
}

#[test]
fn failed_run_keeps_previous_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("d.txt"), "0 1 2\n1 0 1\n2 1 0\n").unwrap();
    let args = ["embed", "--set", "input.kind=distances", "--set", "input.path=d.txt", "--output-dir", "run"];
    let mut first = args.to_vec();
    first.extend(["--set", "clmds.hierarchy=[2, 1]"]);
    ok(&bin(&first, tmp.path()));
    let before = fs::read(tmp.path().join("run/coords.csv")).unwrap();
    let mut second = args.to_vec();
    second.extend(["--set", "clmds.hierarchy=[5, 1]"]);
    assert_eq!(error_line(&bin(&second, tmp.path()))["error"], "too_many_clusters");
    assert_eq!(fs::read(tmp.path().join("run/coords.csv")).unwrap(), before);
    let leftovers: Vec<_> = fs::read_dir(tmp.path().join("run"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().starts_with('.'))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn datagen_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&bin(&["datagen", "s-curve", "--n", "1000", "--output-dir", "s"], tmp.path()));
    let s = parse_table(&fs::read_to_string(tmp.path().join("s/features.csv")).unwrap()).unwrap();
    assert_eq!(s.len(), 1000);
    assert!(s.iter().all(|r| r.len() == 3));

    holes(tmp.path());
    let text = fs::read_to_string(tmp.path().join("data/features.csv")).unwrap();
    assert!(text.starts_with("h1,h2,"));
    let h = parse_table(&text).unwrap();
    assert_eq!(h.len(), 1000);
    assert!(h.iter().all(|r| r.len() == 12));
    let truth = parse_table(&fs::read_to_string(tmp.path().join("data/truth.csv")).unwrap()).unwrap();
    let centers = parse_table(&fs::read_to_string(tmp.path().join("data/centers.csv")).unwrap()).unwrap();
    assert_eq!((truth.len(), centers.len()), (1000, 12));
    // features are distances from the true positions to the centers
    for (f, p) in h.iter().zip(&truth) {
        for (v, c) in f.iter().zip(&centers) {
            assert!((v - ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()).abs() < 1e-12);
        }
    }

    let same = tmp.path().join("again");
    ok(&bin(&["datagen", "holes", "--seed", "1", "--output-dir", "again"], tmp.path()));
    assert_eq!(fs::read(same.join("features.csv")).unwrap(), text.as_bytes());
}

#[test]
fn invalid_holes_spec_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let err = error_line(&bin(&["datagen", "holes", "--hole-radius", "0.3", "--output-dir", "h"], tmp.path()));
    assert_eq!(err["error"], "invalid_config");
    let err = error_line(&bin(&["datagen", "holes", "--n-points", "0", "--output-dir", "h"], tmp.path()));
    assert_eq!(err["error"], "invalid_config");
    assert!(!tmp.path().join("h").exists());
}

#[test]
fn usage_errors_are_json() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(error_line(&bin(&["embed", "--frobnicate"], tmp.path()))["error"], "usage");
    assert_eq!(error_line(&bin(&["embed"], tmp.path()))["error"], "config");
    let err = error_line(&bin(&["embed", "--set", "clmds.nope=1", "--set", "input.path=x"], tmp.path()));
    assert_eq!(err["error"], "config");
}

fn golden_args(dir: &Path, threads: &str) -> Vec<String> {
    [
        "--threads",
        threads,
        "embed",
        "--set",
        &format!("input.path={}", fixture("s_curve_60.csv").display()),
        "--set",
        "clmds.hierarchy=[6, 2, 1]",
        "--set",
        "clmds.sparsify=cur",
        "--set",
        "clmds.n_sparse=40",
        "--seed",
        "5",
        "--output-dir",
        &dir.display().to_string(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Stored output that does not depend on the machine (timings, absolute paths).
fn stable_json(dir: &Path) -> String {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("result.json")).unwrap()).unwrap();
    let obj = v.as_object_mut().unwrap();
    obj.remove("timings");
    obj.remove("config");
    serde_json::to_string_pretty(&v).unwrap() + "\n"
}

#[test]
fn round_trip_and_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let one = tmp.path().join("one");
    let four = tmp.path().join("four");
    ok(&bin(&golden_args(&one, "1").iter().map(String::as_str).collect::<Vec<_>>(), tmp.path()));
    ok(&bin(&golden_args(&four, "4").iter().map(String::as_str).collect::<Vec<_>>(), tmp.path()));

    let coords = fs::read_to_string(one.join("coords.csv")).unwrap();
    assert_eq!(fs::read_to_string(four.join("coords.csv")).unwrap(), coords);
    let stable = stable_json(&one);
    assert_eq!(stable_json(&four), stable);

    // files reconstruct exactly the in-memory result
    let (restored, record) = read_run(&one).unwrap();
    let cfg: RunConfig = record.config;
    let fs_in = load_features(fixture("s_curve_60.csv"), false).unwrap();
    let expected = run(Input::Features { features: &fs_in, metric: &Metric::Euclidean }, &cfg.clmds).unwrap();
    assert_eq!(restored, expected);
    assert_eq!(restored.estimated_mask.iter().filter(|&&e| e).count(), 20);

    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(golden("s_curve_60_coords.csv"), &coords).unwrap();
        fs::write(golden("s_curve_60_result.json"), &stable).unwrap();
    }
    assert_eq!(coords, fs::read_to_string(golden("s_curve_60_coords.csv")).unwrap());
    assert_eq!(stable, fs::read_to_string(golden("s_curve_60_result.json")).unwrap());
}

#[test]
fn shipped_example_config_loads() {
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/example.toml");
    let input = fixture("s_curve_60.csv");
    let cfg = RunConfig::load(Some(&example), &[format!("input.path={}", input.display())]).unwrap();
    assert_eq!(cfg.clmds.hierarchy.levels(), [12, 1]);
    assert!(cfg.output.plot);
    assert!(cfg.output.dir.ends_with("out"));
}
