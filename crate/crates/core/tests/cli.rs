use std::fs;
use std::path::Path;
use std::process::Command;

use lshkd::cli::{run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
use lshkd::model::{Checkpoint, LinearLayer, Mlp};
use lshkd::numerics::RngStream;
use serde_json::Value;

fn lshkd(args: &[&str]) -> i32 {
    run(std::iter::once("lshkd").chain(args.iter().copied()))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn agreement_check_reports_estimate_near_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let code = lshkd(&[
        "theory",
        "--claim",
        "3",
        "--dim",
        "8",
        "--theta",
        "1.5707963",
        "--samples",
        "100000",
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code, EXIT_OK);
    let claims = json(&dir.path().join("claims.json"));
    let c = &claims[0];
    assert_eq!(c["passed"], true);
    assert!((c["estimate"]["value"].as_f64().unwrap() - 0.5).abs() < 0.006);
}

#[test]
fn curve_crossings_decrease_with_hash_count() {
    let dir = tempfile::tempdir().unwrap();
    let code = lshkd(&[
        "theory",
        "--curve",
        "--dim",
        "2048",
        "--n-hash",
        "0,2048,8192",
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code, EXIT_OK);
    let summary = json(&dir.path().join("curve_summary.json"));
    let crossings: Vec<f64> = summary
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["median_angle_rad"].as_f64().unwrap())
        .collect();
    assert!(crossings.windows(2).all(|w| w[1] < w[0]), "{crossings:?}");

    let mut reader = csv::Reader::from_path(dir.path().join("curve.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["D", "N", "epsilon_rad", "cdf_quadrature", "cdf_mc", "mc_stderr"]
    );
    assert_eq!(reader.records().count(), 3 * 180);
    assert!(!fs::read(dir.path().join("curve.csv")).unwrap().contains(&b'\r'));
}

#[test]
fn conditional_check_writes_monte_carlo_column() {
    let dir = tempfile::tempdir().unwrap();
    let code = lshkd(&[
        "theory",
        "--claim",
        "4",
        "--dim",
        "8",
        "--n-hash",
        "4",
        "--samples",
        "50000",
        "--seed",
        "2",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code, EXIT_OK);
    let mut reader = csv::Reader::from_path(dir.path().join("curve.csv")).unwrap();
    let row = reader.records().nth(89).unwrap().unwrap();
    let quad: f64 = row[3].parse().unwrap();
    let mc: f64 = row[4].parse().unwrap();
    assert!((quad - mc).abs() < 0.03, "{quad} vs {mc}");
}

#[test]
fn missing_required_flag_prints_usage_and_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_lshkd"))
        .args(["theory", "--claim", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(out.stdout.is_empty());
}

#[test]
fn failed_checks_exit_1() {
    // `--claim 4` needs some accepted samples; N large at D = 2 accepts none.
    let dir = tempfile::tempdir().unwrap();
    let code = lshkd(&[
        "theory",
        "--claim",
        "4",
        "--dim",
        "2",
        "--n-hash",
        "5000",
        "--samples",
        "32",
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code, EXIT_FAILURE);
}

fn distill_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "distill",
        "--seed",
        "1",
        "--epochs",
        "20",
        "--avg-last-k",
        "5",
        "--n-hash",
        "512",
        "--out",
        out,
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn distillation_modes_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let ce = dir.path().join("ce");
    let lsh = dir.path().join("lshl2");
    let zero = dir.path().join("zero");
    assert_eq!(lshkd(&distill_args(s(&ce), &["--mode", "ce"])), EXIT_OK);
    assert_eq!(
        lshkd(&distill_args(s(&lsh), &["--mode", "lshl2", "--beta", "6"])),
        EXIT_OK
    );
    assert_eq!(
        lshkd(&distill_args(s(&zero), &["--mode", "lshl2", "--beta", "0"])),
        EXIT_OK
    );

    let angle = |d: &Path| json(&d.join("report.json"))["mean_angle_deg"].as_f64().unwrap();
    assert!(angle(&lsh) < angle(&ce) - 15.0, "{} vs {}", angle(&lsh), angle(&ce));
    assert_eq!(
        fs::read(ce.join("student.json")).unwrap(),
        fs::read(zero.join("student.json")).unwrap()
    );

    let log = fs::read_to_string(lsh.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 20);
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["beta"], 6.0);
    for key in ["manifest.json", "teacher.json", "student.json"] {
        assert!(lsh.join(key).exists(), "{key}");
    }
}

#[test]
fn two_stage_logs_both_stages() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("two");
    let code = lshkd(&distill_args(
        s(&out),
        &["--two-stage", "--stage1", "lshl2", "--stage2", "l2"],
    ));
    assert_eq!(code, EXIT_OK);
    let log = fs::read_to_string(out.join("log.jsonl")).unwrap();
    let stages: Vec<String> = log
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["stage"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(stages.iter().filter(|s| *s == "align").count(), 20);
    assert_eq!(stages.iter().filter(|s| *s == "distill").count(), 20);
    assert_eq!(
        json(&out.join("report.json"))["stages"],
        serde_json::json!(["lshl2", "l2"])
    );
}

#[test]
fn dimension_mismatch_without_embedding_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let code = lshkd(&distill_args(s(dir.path()), &["--mode", "l2", "--no-embed"]));
    assert_eq!(code, EXIT_FAILURE);
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(lshkd(&["distill", "--seed", "1", "--mode", "kl"]), EXIT_USAGE);
    assert_eq!(lshkd(&["distill", "--seed", "1", "--bias-init", "mode"]), EXIT_USAGE);
    assert_eq!(lshkd(&["distill", "--mode", "ce"]), EXIT_USAGE);
    assert_eq!(lshkd(&["distill", "--seed", "1", "--stage1", "l2"]), EXIT_USAGE);
}

fn save(model: Mlp, path: &Path) {
    Checkpoint::new(model, 0).save(path).unwrap();
}

#[test]
fn merge_check_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(3);

    // Identity embedding: merged classifier equals the original one.
    let base = Mlp::random(5, &[7], None, 4, &mut rng).unwrap();
    let identity = base.clone().with_embedding(Some(LinearLayer::identity(7))).unwrap();
    let ident_path = dir.path().join("identity.json");
    save(identity, &ident_path);
    let out = dir.path().join("ident-out");
    assert_eq!(
        lshkd(&[
            "merge-check",
            "--checkpoint",
            s(&ident_path),
            "--seed",
            "1",
            "--out",
            s(&out)
        ]),
        EXIT_OK
    );
    assert_eq!(json(&out.join("report.json"))["max_deviation"], 0.0);
    let merged = Checkpoint::load(&out.join("merged.json")).unwrap().model;
    assert_eq!(merged.classifier(), base.classifier());

    let random = Mlp::random(5, &[7], Some(9), 4, &mut rng).unwrap();
    let path = dir.path().join("random.json");
    save(random, &path);
    let out = dir.path().join("random-out");
    assert_eq!(
        lshkd(&["merge-check", "--checkpoint", s(&path), "--seed", "1", "--out", s(&out)]),
        EXIT_OK
    );
    let report = json(&out.join("report.json"));
    assert_eq!(report["probes"], 1000);
    assert!(report["max_deviation"].as_f64().unwrap() < 1e-10);

    // No embedding to merge.
    let path = dir.path().join("plain.json");
    save(base, &path);
    assert_eq!(
        lshkd(&["merge-check", "--checkpoint", s(&path), "--seed", "1", "--out", s(&out)]),
        EXIT_FAILURE
    );

    // Embedding output does not match the classifier input.
    let mut text: Value = json(&dir.path().join("random.json"));
    text["model"]["classifier"]["weights"]["rows"] = serde_json::json!(8);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, text.to_string()).unwrap();
    assert_eq!(
        lshkd(&["merge-check", "--checkpoint", s(&bad), "--seed", "1", "--out", s(&out)]),
        EXIT_FAILURE
    );

    assert_eq!(
        lshkd(&[
            "merge-check",
            "--checkpoint",
            s(&dir.path().join("missing.json")),
            "--seed",
            "1",
            "--out",
            s(&out)
        ]),
        EXIT_FAILURE
    );
}

#[test]
fn stats_of_identical_and_independent_models() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(4);
    let teacher = Mlp::random(16, &[64], Some(32), 10, &mut rng).unwrap();
    let teacher_path = dir.path().join("teacher.json");
    save(teacher, &teacher_path);

    let out = dir.path().join("same");
    let code = lshkd(&[
        "stats",
        "--teacher",
        s(&teacher_path),
        "--student",
        s(&teacher_path),
        "--task-seed",
        "1",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let stats = json(&out.join("stats.json"));
    assert!(stats["mean_angle_deg"].as_f64().unwrap() < 1e-5);
    let std = stats["classifier_weight_std"].as_f64().unwrap();
    assert_eq!(stats["expected_weight_norm"].as_f64().unwrap(), std * 32f64.sqrt());
    assert!((stats["reference_mean_angle_deg"].as_f64().unwrap() - 90.0).abs() < 1e-9);
    let rows = csv::Reader::from_path(out.join("samples.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, stats["samples"].as_u64().unwrap() as usize);

    // Independent random students: the angle averages near the reference mean.
    let mut total = 0.0;
    let runs = 8;
    for k in 0..runs {
        let student = Mlp::random(16, &[12], Some(32), 10, &mut rng).unwrap();
        let path = dir.path().join(format!("student{k}.json"));
        save(student, &path);
        let out = dir.path().join(format!("indep{k}"));
        let code = lshkd(&[
            "stats",
            "--teacher",
            s(&teacher_path),
            "--student",
            s(&path),
            "--task-seed",
            "1",
            "--seed",
            "1",
            "--out",
            s(&out),
        ]);
        assert_eq!(code, EXIT_OK);
        total += json(&out.join("stats.json"))["mean_angle_deg"].as_f64().unwrap();
    }
    let mean = total / runs as f64;
    assert!((mean - 90.0).abs() < 10.0, "mean angle {mean}");
}

#[test]
fn stats_with_unreadable_inputs_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let code = lshkd(&[
        "stats",
        "--teacher",
        s(&missing),
        "--student",
        s(&missing),
        "--task-seed",
        "1",
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code, EXIT_FAILURE);
}

#[test]
fn distill_from_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = lshkd::trainer::generate_blobs(3, 4, 20, 0.3, &mut RngStream::new(9)).unwrap();
    let (tr, te) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
    train.to_csv(&tr).unwrap();
    test.to_csv(&te).unwrap();
    let out = dir.path().join("out");
    let code = lshkd(&[
        "distill",
        "--seed",
        "2",
        "--train-csv",
        s(&tr),
        "--test-csv",
        s(&te),
        "--epochs",
        "10",
        "--avg-last-k",
        "2",
        "--n-hash",
        "64",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let report = json(&out.join("report.json"));
    assert_eq!(report["test"]["samples"], 60);

    // The saved teacher can be reused, and the stats command accepts the CSV.
    let again = dir.path().join("again");
    let teacher = out.join("teacher.json");
    let code = lshkd(&[
        "distill",
        "--seed",
        "2",
        "--train-csv",
        s(&tr),
        "--test-csv",
        s(&te),
        "--epochs",
        "10",
        "--avg-last-k",
        "2",
        "--n-hash",
        "64",
        "--teacher",
        s(&teacher),
        "--out",
        s(&again),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(
        fs::read(out.join("student.json")).unwrap(),
        fs::read(again.join("student.json")).unwrap()
    );
    let stats_out = dir.path().join("stats");
    let code = lshkd(&[
        "stats",
        "--teacher",
        s(&teacher),
        "--student",
        s(&out.join("student.json")),
        "--data",
        s(&te),
        "--seed",
        "1",
        "--out",
        s(&stats_out),
    ]);
    assert_eq!(code, EXIT_OK);
}
