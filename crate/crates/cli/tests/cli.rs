//! End-to-end tests of the `vouch` binary: each test drives the compiled
//! executable through a real tempdir workflow.

use std::path::Path;
use std::process::{Command, Output};

use vouch_cli::data::load_dataset;
use vouch_cli::report::{read_run_file, round_trips};

fn vouch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vouch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        stdout(out),
        stderr(out)
    );
}

#[test]
fn synth_train_report_pipeline_produces_canonical_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run.json");
    let csv = dir.path().join("table.csv");
    let plot = dir.path().join("plot.json");

    let out = vouch(&[
        "synth",
        "--spec",
        "2,60,2,1,0.8,1.4",
        "--seed",
        "3",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(data.join("meta.json").is_file());
    assert!(data.join("view_2.csv").is_file());

    let out = vouch(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--bounds",
        "K,R",
        "--seeds",
        "2",
        "--trees",
        "9",
        "--iters",
        "40",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(
        round_trips(&run).unwrap(),
        "run file must re-serialize byte-identically"
    );
    let file = read_run_file(&run).unwrap();
    assert_eq!(file.records.len(), 4, "2 kinds × 2 seeds");
    assert!(stdout(&out).contains("certified"), "aggregate table printed");

    let out = vouch(&[
        "report",
        run.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--plot",
        plot.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(
        table.starts_with("kind,multiview:bound,multiview:gibbs,multiview:bayes"),
        "unexpected header in:\n{table}"
    );
    let plot_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&plot).unwrap()).unwrap();
    assert_eq!(plot_json["schema"], 1);
    assert!(plot_json["series"].as_array().is_some_and(|s| !s.is_empty()));
}

#[test]
fn binary_only_bounds_are_refused_on_multiclass_data() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run.json");
    let out = vouch(&[
        "train",
        "--synth",
        "2,30,3,1,0.5,1.0",
        "--bounds",
        "R2",
        "--seeds",
        "1",
        "--trees",
        "5",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(!out.status.success(), "must fail on 3 classes");
    assert!(
        stderr(&out).contains("binary-only"),
        "stderr was:\n{}",
        stderr(&out)
    );
    assert!(!run.exists(), "no run file on failure");
}

#[test]
fn verify_subcommand_prints_one_line_per_check() {
    let out = vouch(&[
        "verify",
        "--instances",
        "8",
        "--grad-points",
        "1",
        "--seed",
        "1",
    ]);
    assert_ok(&out);
    let text = stdout(&out);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("PASS")).count(),
        5,
        "output was:\n{text}"
    );
    assert!(!text.contains("FAIL"));
}

#[test]
fn alpha_sweep_without_a_grid_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vouch(&[
        "sweep",
        "--synth",
        "2,30,2,1,0.5,1.0",
        "--axis",
        "alpha",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("empty sweep grid"),
        "stderr was:\n{}",
        stderr(&out)
    );
}

#[test]
fn alpha_sweep_writes_one_cell_per_order_plus_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let out = vouch(&[
        "sweep",
        "--synth",
        "2,40,2,1,0.6,1.2",
        "--axis",
        "alpha",
        "--alphas",
        "1.1,2",
        "--bounds",
        "K",
        "--seeds",
        "1",
        "--trees",
        "5",
        "--iters",
        "20",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    for cell in ["sweep-alpha-1.1.json", "sweep-alpha-2.json"] {
        let path = out_dir.join(cell);
        assert!(path.is_file(), "missing {cell}");
        assert!(round_trips(&path).unwrap(), "{cell} must round-trip");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["axis"], "alpha");
    let series = summary["series"].as_array().unwrap();
    assert_eq!(series.len(), 1);
    assert_eq!(series[0]["kind"], "K");
    assert_eq!(series[0]["points"].as_array().unwrap().len(), 2);
}

#[test]
fn poison_perturbs_only_the_targeted_view() {
    let dir = tempfile::tempdir().unwrap();
    let clean_dir = dir.path().join("clean");
    let bad_dir = dir.path().join("bad");
    assert_ok(&vouch(&[
        "synth",
        "--spec",
        "2,25,2,2,0.7,1.1",
        "--out",
        clean_dir.to_str().unwrap(),
    ]));
    assert_ok(&vouch(&[
        "poison",
        "--data",
        clean_dir.to_str().unwrap(),
        "--views",
        "2",
        "--sigma",
        "1.5",
        "--out",
        bad_dir.to_str().unwrap(),
    ]));
    let clean = load_dataset(Path::new(&clean_dir)).unwrap();
    let bad = load_dataset(Path::new(&bad_dir)).unwrap();
    assert_eq!(clean.views[0], bad.views[0], "untargeted view untouched");
    assert_ne!(clean.views[1], bad.views[1], "targeted view perturbed");
    assert_eq!(clean.labels, bad.labels);
}
