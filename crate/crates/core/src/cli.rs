//! The `lshkd` command line.
//!
//! Every command writes its outputs plus a `manifest.json` into `--out`.
//! `lshkd replay --manifest <file> --out <dir>` re-runs the recorded
//! argument list into a new directory; all outputs other than the manifest
//! come out byte-identical.
//!
//! Exit codes: 0 success, 1 failed check or configuration error, 2 usage
//! error.

use std::f64::consts::PI;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::io::{create_dir_all, read_to_string, write_atomic};
use crate::lsh::BiasInit;
use crate::model::{Checkpoint, Mlp};
use crate::numerics::{angle_between, norm, RngStream, RNG_DESCRIPTION};
use crate::theory::{self, AngleCdfTable, ClaimReport, McEstimate};
use crate::trainer::{
    accuracy, distill, feature_stats, streams, two_stage_finetune, BlobTask, Dataset, DistillConfig, LossMode, Split,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CURVE_HEADER: [&str; 6] = ["D", "N", "epsilon_rad", "cdf_quadrature", "cdf_mc", "mc_stderr"];

#[derive(Debug, Parser)]
#[command(name = "lshkd", version, about = "Feature-direction distillation with an LSH loss")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Numerical checks of the LSH loss's angle statistics.
    Theory(TheoryArgs),
    /// Train a student against a teacher on the blob task or CSV data.
    Distill(DistillArgs),
    /// Fold a checkpoint's embedding into its classifier and compare outputs.
    MergeCheck(MergeCheckArgs),
    /// Feature norm and angle diagnostics between two checkpoints.
    Stats(StatsArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group = clap::ArgGroup::new("task").required(true).multiple(true).args(["claim", "curve"]))]
struct TheoryArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Claim to verify (1-4); may be repeated.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    claim: Vec<u8>,
    /// Write the conditional angle CDF for every `--n-hash` value.
    #[arg(long)]
    curve: bool,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Comma-separated hash counts.
    #[arg(long, value_delimiter = ',', default_value = "2048")]
    n_hash: Vec<usize>,
    /// Angle in radians for `--claim 3`.
    #[arg(long)]
    theta: Option<f64>,
    /// Trials or Monte Carlo proposals. With `--curve`, also adds a
    /// rejection-sampled column.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct DistillArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Input dimension of the generated blob task.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 2048)]
    n_hash: usize,
    #[arg(long, default_value_t = 1.0)]
    std_hash: f64,
    /// zero, mean or median.
    #[arg(long, default_value = "median")]
    bias_init: BiasInit,
    #[arg(long, default_value_t = 6.0)]
    beta: f64,
    /// ce, l2, lsh or lshl2.
    #[arg(long, default_value = "lshl2")]
    mode: LossMode,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 10)]
    avg_last_k: usize,
    /// Give the student a linear embedding to the teacher's feature size.
    #[arg(long, overrides_with = "no_embed")]
    embed: bool,
    #[arg(long, overrides_with = "embed")]
    no_embed: bool,
    /// Apply the mimicking loss only where the teacher is correct.
    #[arg(long, overrides_with = "no_filter")]
    filter: bool,
    #[arg(long, overrides_with = "filter")]
    no_filter: bool,
    /// Embedding-only alignment with `--stage1`, then full training with `--stage2`.
    #[arg(long)]
    two_stage: bool,
    #[arg(long, default_value = "lshl2", requires = "two_stage")]
    stage1: LossMode,
    #[arg(long, default_value = "l2", requires = "two_stage")]
    stage2: LossMode,
    /// Training data CSV (`label,x0,x1,...`); replaces the generated task.
    #[arg(long, requires = "test_csv")]
    train_csv: Option<PathBuf>,
    #[arg(long, requires = "train_csv")]
    test_csv: Option<PathBuf>,
    /// Teacher checkpoint; trained from scratch when absent.
    #[arg(long)]
    teacher: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct MergeCheckArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 1000)]
    probes: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["data", "task_seed"]))]
struct StatsArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    student: PathBuf,
    /// Dataset CSV (`label,x0,x1,...`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use the generated blob task for this seed instead of a CSV.
    #[arg(long)]
    task_seed: Option<u64>,
    /// Split of the generated task.
    #[arg(long, default_value = "test", value_parser = ["train", "test"])]
    split: String,
}

#[derive(Debug, Clone, Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, exactly as given.
    pub args: Vec<String>,
    pub config: Value,
    pub seed: u64,
    pub version: String,
    pub rng: String,
    /// Output files, relative to the output directory.
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_to_string(path)?)?)
    }
}

/// Files produced by one command, written atomically in order.
struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn finish(self, command: &str, args: &[String], config: Value, seed: u64, started: Instant) -> Result<()> {
        let manifest = RunManifest {
            command: command.to_string(),
            args: args.to_vec(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            rng: RNG_DESCRIPTION.to_string(),
            outputs: self.names.clone(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

/// Outcome of a command that ran to completion.
enum Verdict {
    Pass,
    Fail(String),
    /// Flags that parse but do not fit together.
    Usage(String),
}

/// Runs the CLI on `argv` (including the program name) and returns the exit
/// code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let started = Instant::now();
    let result = match cli.command {
        Command::Theory(a) => cmd_theory(&a, &args, started),
        Command::Distill(a) => cmd_distill(&a, &args, started),
        Command::MergeCheck(a) => cmd_merge_check(&a, &args, started),
        Command::Stats(a) => cmd_stats(&a, &args, started),
        Command::Replay(a) => return cmd_replay(&a),
    };
    match result {
        Ok(Verdict::Pass) => EXIT_OK,
        Ok(Verdict::Fail(msg)) => {
            eprintln!("lshkd: check failed: {msg}");
            EXIT_FAILURE
        }
        Ok(Verdict::Usage(msg)) => {
            eprintln!("lshkd: usage: {msg}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("lshkd: {e}");
            EXIT_FAILURE
        }
    }
}

fn config_value<T: Serialize>(value: &T) -> Result<Value> {
    Ok(serde_json::to_value(value)?)
}

#[derive(Debug, Serialize)]
struct ClaimOutput {
    #[serde(flatten)]
    report: ClaimReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<McEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CurveSummary {
    dim: usize,
    n_hash: usize,
    median_angle_rad: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance: Option<McEstimate>,
}

struct CurveRow {
    n_hash: usize,
    epsilon: f64,
    quadrature: f64,
    mc: Option<(f64, f64)>,
}

fn curve_csv(dim: usize, rows: &[CurveRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CURVE_HEADER)?;
    for r in rows {
        let (mc, se) = match r.mc {
            Some((p, s)) => (p.to_string(), s.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            dim.to_string(),
            r.n_hash.to_string(),
            r.epsilon.to_string(),
            r.quadrature.to_string(),
            mc,
            se,
        ])?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

/// Curve rows for one `N` on the whole-degree grid (ε = 0 omitted).
fn curve_rows(n_hash: usize, table: &AngleCdfTable, mc: Option<&theory::ConditionalAngleMc>) -> Vec<CurveRow> {
    theory::degree_grid()
        .into_iter()
        .skip(1)
        .map(|epsilon| CurveRow {
            n_hash,
            epsilon,
            quadrature: table.eval(epsilon),
            mc: mc.map(|m| (m.empirical_cdf(epsilon), m.cdf_std_error(epsilon))),
        })
        .collect()
}

fn cmd_theory(a: &TheoryArgs, args: &[String], started: Instant) -> Result<Verdict> {
    if a.claim.contains(&3) && a.theta.is_none() {
        return Ok(Verdict::Usage("--claim 3 needs --theta".into()));
    }
    let base = RngStream::new(a.seed);
    let mut out = Outputs::new(&a.out)?;
    let mut claims = Vec::new();
    let mut curve = Vec::new();
    let mut summaries = Vec::new();
    let mut failures = Vec::new();

    for &claim in &a.claim {
        let mut rng = base.substream(u64::from(claim));
        match claim {
            1 | 2 => {
                let trials = a.samples.unwrap_or(1000);
                for &n in &a.n_hash {
                    let report = if claim == 1 {
                        theory::verify_scale_invariance(a.dim, n, trials, &mut rng)?
                    } else {
                        theory::verify_magnitude_freedom(a.dim, n, trials, &mut rng)?
                    };
                    claims.push(ClaimOutput {
                        report,
                        estimate: None,
                        closed_form: None,
                    });
                }
            }
            3 => {
                let theta = a.theta.unwrap_or(PI / 2.0);
                let (report, est) =
                    theory::verify_agreement_probability(a.dim, theta, a.samples.unwrap_or(100_000), &mut rng)?;
                claims.push(ClaimOutput {
                    report,
                    estimate: Some(est),
                    closed_form: Some(theory::prob_loss_small_given_angle(theta)?),
                });
            }
            _ => {
                for (k, &n) in a.n_hash.iter().enumerate() {
                    let (report, mc) = theory::verify_conditional_angle(
                        a.dim,
                        n,
                        a.samples.unwrap_or(200_000),
                        &rng.substream(k as u64),
                    )?;
                    let table = AngleCdfTable::new(a.dim, n)?;
                    curve.extend(curve_rows(n, &table, Some(&mc)));
                    claims.push(ClaimOutput {
                        report,
                        estimate: Some(mc.acceptance),
                        closed_form: Some(theory::predicted_acceptance(a.dim, n)?),
                    });
                }
            }
        }
    }
    failures.extend(
        claims
            .iter()
            .filter(|c| !c.report.passed)
            .map(|c| format!("claim {}: {}", c.report.claim, c.report.detail)),
    );

    if a.curve {
        let curve_rng = base.substream(100);
        for (k, &n) in a.n_hash.iter().enumerate() {
            let table = AngleCdfTable::new(a.dim, n)?;
            let mc = match a.samples {
                Some(s) => Some(theory::mc_conditional_angle(
                    a.dim,
                    n,
                    s,
                    &curve_rng.substream(k as u64),
                )?),
                None => None,
            };
            summaries.push(CurveSummary {
                dim: a.dim,
                n_hash: n,
                median_angle_rad: table.quantile(0.5),
                acceptance: mc.as_ref().map(|m| m.acceptance),
            });
            curve.extend(curve_rows(n, &table, mc.as_ref()));
        }
    }

    if !claims.is_empty() {
        out.write_json("claims.json", &claims)?;
    }
    if !curve.is_empty() {
        out.write("curve.csv", &curve_csv(a.dim, &curve)?)?;
    }
    if !summaries.is_empty() {
        out.write_json("curve_summary.json", &summaries)?;
    }
    for c in &claims {
        println!(
            "claim {}: {} ({})",
            c.report.claim,
            if c.report.passed { "pass" } else { "FAIL" },
            c.report.detail
        );
    }
    out.finish("theory", args, config_value(a)?, a.seed, started)?;
    Ok(if failures.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail(failures.join("; "))
    })
}

fn distill_config(a: &DistillArgs) -> DistillConfig {
    DistillConfig {
        beta: a.beta,
        n_hash: a.n_hash,
        std_hash: a.std_hash,
        bias_init: a.bias_init,
        lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        filter_teacher_correct: !a.no_filter,
        avg_last_k: a.avg_last_k,
        loss_mode: a.mode,
        use_embedding: !a.no_embed,
        seed: a.seed,
    }
}

#[derive(Debug, Serialize)]
struct DistillReport {
    mode: String,
    stages: Vec<String>,
    teacher_train_accuracy: f64,
    teacher_test_accuracy: f64,
    mean_angle_deg: f64,
    accuracy: f64,
    train: crate::trainer::AngleStats,
    test: crate::trainer::AngleStats,
}

fn cmd_distill(a: &DistillArgs, args: &[String], started: Instant) -> Result<Verdict> {
    let cfg = distill_config(a);
    cfg.validate()?;
    let mut task = BlobTask {
        dim: a.dim,
        n_classes: a.classes,
        ..BlobTask::calibrated()
    };
    let (train, test) = match (&a.train_csv, &a.test_csv) {
        (Some(tr), Some(te)) => {
            let train = Dataset::from_csv(tr, Split::Train, None)?;
            let test = Dataset::from_csv(te, Split::Test, Some(train.n_classes()))?;
            task.dim = train.dim();
            task.n_classes = train.n_classes();
            (train, test)
        }
        _ => task.data(a.seed)?,
    };
    let teacher = match &a.teacher {
        Some(path) => Checkpoint::load(path)?.model,
        None => task.train_teacher(a.seed, &train)?,
    };
    let student = BlobTask {
        teacher_hidden: vec![teacher.feature_dim()],
        ..task.clone()
    }
    .init_student(a.seed, cfg.use_embedding)?;

    let outcome = if a.two_stage {
        two_stage_finetune(&teacher, &student, &train, Some(&test), &cfg, a.stage1, a.stage2)?
    } else {
        distill(&teacher, &student, &train, Some(&test), &cfg)?
    };

    let mut out = Outputs::new(&a.out)?;
    let mut log = String::new();
    for line in &outcome.log {
        log.push_str(&serde_json::to_string(line)?);
        log.push('\n');
    }
    out.write("log.jsonl", log.as_bytes())?;
    let train_stats = feature_stats(&teacher, &outcome.model, &train)?;
    let test_stats = feature_stats(&teacher, &outcome.model, &test)?;
    let report = DistillReport {
        mode: cfg.loss_mode.name().to_string(),
        stages: if a.two_stage {
            vec![a.stage1.name().to_string(), a.stage2.name().to_string()]
        } else {
            vec![cfg.loss_mode.name().to_string()]
        },
        teacher_train_accuracy: accuracy(&teacher, &train)?,
        teacher_test_accuracy: accuracy(&teacher, &test)?,
        mean_angle_deg: test_stats.mean_angle_deg,
        accuracy: test_stats.accuracy,
        train: train_stats,
        test: test_stats,
    };
    out.write_json("report.json", &report)?;
    out.write("teacher.json", Checkpoint::new(teacher, a.seed).to_json()?.as_bytes())?;
    out.write(
        "student.json",
        Checkpoint::new(outcome.model, a.seed).to_json()?.as_bytes(),
    )?;
    println!(
        "{}: test angle {:.2} deg, test accuracy {:.4}",
        report.stages.join("+"),
        report.mean_angle_deg,
        report.accuracy
    );
    let config = json!({ "args": config_value(a)?, "train": config_value(&cfg)?, "task": config_value(&task)? });
    out.finish("distill", args, config, a.seed, started)?;
    Ok(Verdict::Pass)
}

/// Maximum tolerated per-logit deviation between a network and its merged form.
pub const MERGE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Serialize)]
struct MergeReport {
    probes: usize,
    max_deviation: f64,
    tolerance: f64,
    passed: bool,
    params_before: usize,
    params_after: usize,
}

fn cmd_merge_check(a: &MergeCheckArgs, args: &[String], started: Instant) -> Result<Verdict> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let model = &ckpt.model;
    if model.embedding().is_none() {
        return Err(Error::Config("checkpoint has no embedding layer to merge".into()));
    }
    let merged = model.merged()?;

    let mut rng = RngStream::new(a.seed).substream(streams::PROBES);
    let mut worst: f64 = 0.0;
    for _ in 0..a.probes {
        let x = rng.normal_vec(model.input_dim());
        let before = model.forward(&x)?.logits;
        let after = merged.forward(&x)?.logits;
        for (p, q) in before.iter().zip(&after) {
            worst = worst.max((p - q).abs());
        }
    }
    let report = MergeReport {
        probes: a.probes,
        max_deviation: worst,
        tolerance: MERGE_TOLERANCE,
        passed: worst < MERGE_TOLERANCE,
        params_before: model.num_params(),
        params_after: merged.num_params(),
    };
    let mut out = Outputs::new(&a.out)?;
    out.write_json("report.json", &report)?;
    out.write("merged.json", Checkpoint::new(merged, ckpt.seed).to_json()?.as_bytes())?;
    println!("max deviation {:e} over {} probes", worst, a.probes);
    out.finish("merge-check", args, config_value(a)?, a.seed, started)?;
    Ok(if report.passed {
        Verdict::Pass
    } else {
        Verdict::Fail(format!("max deviation {worst:e} >= {MERGE_TOLERANCE:e}"))
    })
}

#[derive(Debug, Serialize)]
struct StatsReport {
    #[serde(flatten)]
    stats: crate::trainer::AngleStats,
    feature_dim: usize,
    /// Mean angle of the reference density for independent Gaussian features.
    reference_mean_angle_deg: f64,
    classifier_weight_std: f64,
    expected_weight_norm: f64,
    mean_classifier_weight_norm: f64,
}

fn mean_column_norm(model: &Mlp) -> f64 {
    let w = model.classifier().weights();
    let norms: Vec<f64> = (0..w.cols()).map(|c| norm(&w.column(c))).collect();
    crate::numerics::mean(&norms)
}

fn cmd_stats(a: &StatsArgs, args: &[String], started: Instant) -> Result<Verdict> {
    let teacher = Checkpoint::load(&a.teacher)?.model;
    let student = Checkpoint::load(&a.student)?.model;
    let data = match (&a.data, a.task_seed) {
        (Some(path), _) => Dataset::from_csv(path, Split::Test, Some(teacher.n_classes()))?,
        (None, Some(seed)) => {
            let task = BlobTask {
                dim: teacher.input_dim(),
                n_classes: teacher.n_classes(),
                ..BlobTask::calibrated()
            };
            let (train, test) = task.data(seed)?;
            if a.split == "train" {
                train
            } else {
                test
            }
        }
        (None, None) => unreachable!("clap requires --data or --task-seed"),
    };
    let stats = feature_stats(&teacher, &student, &data)?;
    let d = student.feature_dim();
    let std = student.classifier().weights().std();
    let report = StatsReport {
        stats,
        feature_dim: d,
        reference_mean_angle_deg: theory::angle_pdf_mean(d)?.to_degrees(),
        classifier_weight_std: std,
        expected_weight_norm: theory::expected_weight_norm(std, d),
        mean_classifier_weight_norm: mean_column_norm(&student),
    };

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        "index",
        "label",
        "teacher_norm",
        "student_norm",
        "angle_deg",
        "student_prediction",
    ])?;
    for (i, (x, &y)) in data.inputs().iter().zip(data.labels()).enumerate() {
        let t = teacher.forward(x)?;
        let s = student.forward(x)?;
        let angle = match angle_between(&t.feature, &s.feature) {
            Ok(v) => v.to_degrees().to_string(),
            Err(Error::DegenerateVector) => String::new(),
            Err(e) => return Err(e),
        };
        w.write_record([
            i.to_string(),
            y.to_string(),
            norm(&t.feature).to_string(),
            norm(&s.feature).to_string(),
            angle,
            crate::losses::argmax(&s.logits).to_string(),
        ])?;
    }
    let per_sample = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;

    let mut out = Outputs::new(&a.out)?;
    out.write_json("stats.json", &report)?;
    out.write("samples.csv", &per_sample)?;
    println!(
        "mean angle {:.2} deg, |f_t| {:.4}, |f_s| {:.4}, accuracy {:.4}",
        report.stats.mean_angle_deg,
        report.stats.mean_teacher_norm,
        report.stats.mean_student_norm,
        report.stats.accuracy
    );
    out.finish("stats", args, config_value(a)?, a.seed, started)?;
    Ok(Verdict::Pass)
}

/// Replaces the value of `--out` in a recorded argument list.
fn redirect_out(args: &[String], out: &Path) -> Vec<String> {
    let out = out.to_string_lossy().into_owned();
    let mut result = Vec::with_capacity(args.len() + 2);
    let mut replaced = false;
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        if arg == "--out" {
            iter.next();
            result.extend(["--out".to_string(), out.clone()]);
            replaced = true;
        } else if arg.starts_with("--out=") {
            result.push(format!("--out={out}"));
            replaced = true;
        } else {
            result.push(arg.clone());
        }
    }
    if !replaced {
        result.extend(["--out".to_string(), out]);
    }
    result
}

fn cmd_replay(a: &ReplayArgs) -> i32 {
    let manifest = match RunManifest::load(&a.manifest) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("lshkd: {e}");
            return EXIT_FAILURE;
        }
    };
    if manifest.version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "lshkd: warning: manifest written by version {}, replaying with {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let argv = std::iter::once("lshkd".to_string()).chain(redirect_out(&manifest.args, &a.out));
    run(argv)
}
