//! Training loops: plain cross-entropy training, feature-mimicking
//! distillation, the two-stage alignment schedule, and the feature
//! diagnostics (norms, mean angle, accuracy) used to compare them.
//!
//! All loops are plain minibatch SGD with a constant learning rate. Batch
//! order comes from a substream of `cfg.seed` that no other component draws
//! from, so two runs that differ only in loss weights visit the same batches.
//! Per-sample gradients are summed in batch order and divided by the batch
//! size; samples dropped by teacher-correct filtering still count in that
//! denominator.

use std::collections::VecDeque;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::losses::{argmax, mse_feature_grad, mse_feature_loss, softmax_cross_entropy};
use crate::lsh::{BiasInit, HashModule};
use crate::model::{Activation, HiddenLayer, LinearLayer, Mlp};
use crate::numerics::{angle_between, norm, Matrix, RngStream};

/// Substream indices derived from a run seed.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const TEACHER_INIT: u64 = 2;
    pub const STUDENT_INIT: u64 = 3;
    pub const SOURCE_DATA: u64 = 4;
    pub const ROTATION: u64 = 5;
    pub const PROBES: u64 = 6;
    pub const SHUFFLE: u64 = 10;
    pub const HASH: u64 = 11;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize, split: Split) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(invalid(format!("{} inputs but {} labels", inputs.len(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(invalid(format!("label {bad} >= class count {n_classes}")));
        }
        let dim = inputs.first().map_or(0, Vec::len);
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(invalid("inputs have differing dimensions"));
        }
        if inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("inputs contain non-finite values"));
        }
        Ok(Self {
            inputs,
            labels,
            n_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Reads `label,x0,x1,...` rows. Ragged rows are rejected. The class
    /// count is one more than the largest label unless given.
    pub fn from_csv(path: &Path, split: Split, n_classes: Option<usize>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let header = reader.headers()?.clone();
        if header.get(0) != Some("label") || header.len() < 2 {
            return Err(invalid(format!(
                "{}: header must start with 'label' followed by feature columns",
                path.display()
            )));
        }
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(format!("{}: row {}: '{s}': {e}", path.display(), row + 1)))
            };
            let label = record[0]
                .trim()
                .parse::<usize>()
                .map_err(|e| invalid(format!("{}: row {}: label: {e}", path.display(), row + 1)))?;
            labels.push(label);
            inputs.push(record.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?);
        }
        let classes = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Self::new(inputs, labels, classes, split)
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim()).map(|i| format!("x{i}")));
        writer.write_record(&header)?;
        for (x, &y) in self.inputs.iter().zip(&self.labels) {
            let mut row = vec![y.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            writer.write_record(&row)?;
        }
        let bytes = writer.into_inner().map_err(|e| invalid(e.to_string()))?;
        crate::io::write_atomic(path, &bytes)
    }
}

/// Gaussian clusters around `Normal(0, I)` centres. Train and test sets get
/// `samples_per_class` points per class each, drawn after the centres.
pub fn generate_blobs(
    n_classes: usize,
    dim: usize,
    samples_per_class: usize,
    spread: f64,
    rng: &mut RngStream,
) -> Result<(Dataset, Dataset)> {
    if n_classes == 0 || dim == 0 || samples_per_class == 0 || !(spread > 0.0) {
        return Err(invalid("generate_blobs: counts must be >= 1 and spread > 0"));
    }
    let centres: Vec<Vec<f64>> = (0..n_classes).map(|_| rng.normal_vec(dim)).collect();
    let mut draw = |split| {
        let mut inputs = Vec::with_capacity(n_classes * samples_per_class);
        let mut labels = Vec::with_capacity(n_classes * samples_per_class);
        for _ in 0..samples_per_class {
            for (c, centre) in centres.iter().enumerate() {
                inputs.push(centre.iter().map(|m| m + spread * rng.normal()).collect());
                labels.push(c);
            }
        }
        Dataset::new(inputs, labels, n_classes, split)
    };
    let train = draw(Split::Train)?;
    let test = draw(Split::Test)?;
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Ce,
    L2,
    Lsh,
    Lshl2,
}

impl LossMode {
    pub fn uses_mse(self) -> bool {
        matches!(self, Self::L2 | Self::Lshl2)
    }

    pub fn uses_lsh(self) -> bool {
        matches!(self, Self::Lsh | Self::Lshl2)
    }

    pub fn mimics(self) -> bool {
        self != Self::Ce
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ce => "ce",
            Self::L2 => "l2",
            Self::Lsh => "lsh",
            Self::Lshl2 => "lshl2",
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(Self::Ce),
            "l2" => Ok(Self::L2),
            "lsh" => Ok(Self::Lsh),
            "lshl2" => Ok(Self::Lshl2),
            other => Err(invalid(format!(
                "unknown loss mode '{other}' (expected ce, l2, lsh or lshl2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub beta: f64,
    pub n_hash: usize,
    pub std_hash: f64,
    pub bias_init: BiasInit,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub filter_teacher_correct: bool,
    pub avg_last_k: usize,
    pub loss_mode: LossMode,
    pub use_embedding: bool,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            beta: 6.0,
            n_hash: 2048,
            std_hash: 1.0,
            bias_init: BiasInit::Median,
            lr: 0.05,
            epochs: 60,
            batch_size: 32,
            filter_teacher_correct: true,
            avg_last_k: 10,
            loss_mode: LossMode::Lshl2,
            use_embedding: true,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be >= 0, got {}", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if self.avg_last_k == 0 || self.avg_last_k > self.epochs {
            return Err(Error::Config(format!(
                "avg_last_k must lie in 1..={} (epochs), got {}",
                self.epochs, self.avg_last_k
            )));
        }
        if self.loss_mode.uses_lsh() && (self.n_hash == 0 || !(self.std_hash > 0.0)) {
            return Err(Error::Config("LSH loss needs n_hash >= 1 and std_hash > 0".into()));
        }
        Ok(())
    }
}

/// Feature diagnostics between a teacher and a student on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleStats {
    pub split: Split,
    pub samples: usize,
    /// Samples left out of the norm/angle means because a feature was zero.
    pub skipped: usize,
    pub mean_teacher_norm: f64,
    pub mean_student_norm: f64,
    pub mean_angle_deg: f64,
    /// Student top-1 accuracy over all samples.
    pub accuracy: f64,
}

/// Means of `‖f_t‖`, `‖f_s‖` and the raw angle in degrees, plus student
/// accuracy. Samples where either feature is zero are skipped and counted.
pub fn feature_stats(teacher: &Mlp, student: &Mlp, data: &Dataset) -> Result<AngleStats> {
    if teacher.feature_dim() != student.feature_dim() {
        return Err(Error::Config(format!(
            "teacher feature dim {} != student feature dim {}",
            teacher.feature_dim(),
            student.feature_dim()
        )));
    }
    let mut skipped = 0;
    let mut correct = 0;
    let (mut tn, mut sn, mut angle) = (0.0, 0.0, 0.0);
    for (x, &y) in data.inputs.iter().zip(&data.labels) {
        let t = teacher.forward(x)?;
        let s = student.forward(x)?;
        if argmax(&s.logits) == y {
            correct += 1;
        }
        match angle_between(&t.feature, &s.feature) {
            Ok(a) => {
                tn += norm(&t.feature);
                sn += norm(&s.feature);
                angle += a.to_degrees();
            }
            Err(Error::DegenerateVector) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let used = (data.len() - skipped) as f64;
    Ok(AngleStats {
        split: data.split,
        samples: data.len(),
        skipped,
        mean_teacher_norm: tn / used,
        mean_student_norm: sn / used,
        mean_angle_deg: angle / used,
        accuracy: correct as f64 / data.len() as f64,
    })
}

pub fn accuracy(model: &Mlp, data: &Dataset) -> Result<f64> {
    let mut correct = 0;
    for (x, &y) in data.inputs.iter().zip(&data.labels) {
        if argmax(&model.forward(x)?.logits) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// One line of the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: String,
    pub epoch: usize,
    pub ce: f64,
    pub mse: f64,
    pub lsh: f64,
    pub beta: f64,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<AngleStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<AngleStats>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub log: Vec<EpochLog>,
    /// Teacher/student diagnostics on the training data (absent without a teacher).
    pub stats: Option<AngleStats>,
}

/// Frozen teacher outputs cached for every training sample.
struct TeacherTargets<'a> {
    model: &'a Mlp,
    features: Vec<Vec<f64>>,
    correct: Vec<bool>,
    hash: Option<HashModule>,
}

impl<'a> TeacherTargets<'a> {
    fn new(teacher: &'a Mlp, data: &Dataset, cfg: &DistillConfig) -> Result<Self> {
        let mut features = Vec::with_capacity(data.len());
        let mut correct = Vec::with_capacity(data.len());
        for (x, &y) in data.inputs.iter().zip(&data.labels) {
            let t = teacher.forward(x)?;
            correct.push(argmax(&t.logits) == y);
            features.push(t.feature);
        }
        let hash = if cfg.loss_mode.uses_lsh() && cfg.beta > 0.0 {
            let mut rng = RngStream::new(cfg.seed).substream(streams::HASH);
            let module = HashModule::init(teacher.feature_dim(), cfg.n_hash, cfg.std_hash, &mut rng)?;
            Some(module.with_bias(&features, cfg.bias_init)?)
        } else {
            None
        };
        Ok(Self {
            model: teacher,
            features,
            correct,
            hash,
        })
    }
}

/// What one call of [`sgd`] optimizes.
struct Objective<'t, 'a> {
    teacher: Option<&'t TeacherTargets<'a>>,
    mode: LossMode,
    /// Weight on the classification loss (0 or 1).
    ce_weight: f64,
    /// Weight on the mimicking terms.
    beta: f64,
    trainable: Range<usize>,
    stage: &'static str,
}

fn sgd(
    student: &mut Mlp,
    data: &Dataset,
    eval: Option<&Dataset>,
    cfg: &DistillConfig,
    objective: &Objective<'_, '_>,
    avg_last_k: usize,
) -> Result<Vec<EpochLog>> {
    if student.input_dim() != data.dim() || student.n_classes() != data.n_classes() {
        return Err(Error::Config(format!(
            "network ({} inputs, {} classes) does not fit the data ({} inputs, {} classes)",
            student.input_dim(),
            student.n_classes(),
            data.dim(),
            data.n_classes()
        )));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let mimic = objective
        .teacher
        .filter(|_| objective.beta > 0.0 && objective.mode.mimics());
    let mut shuffle = RngStream::new(cfg.seed).substream(streams::SHUFFLE);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut params = student.flat_params();
    let mut snapshots: VecDeque<Vec<f64>> = VecDeque::with_capacity(avg_last_k);
    let mut log = Vec::with_capacity(cfg.epochs);
    let zero_feature = vec![0.0; student.feature_dim()];
    let zero_logits = vec![0.0; student.n_classes()];

    for epoch in 0..cfg.epochs {
        shuffle.shuffle(&mut order);
        let (mut ce_sum, mut mse_sum, mut lsh_sum) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; params.len()];
            for &i in batch {
                let trace = student.forward(&data.inputs[i])?;
                let (ce, mut dlogits) = softmax_cross_entropy(&trace.logits, data.labels[i])?;
                ce_sum += ce;
                if objective.ce_weight == 0.0 {
                    dlogits.copy_from_slice(&zero_logits);
                }
                let mut dfeature = zero_feature.clone();
                if let Some(t) = mimic {
                    if !cfg.filter_teacher_correct || t.correct[i] {
                        let f_t = &t.features[i];
                        if objective.mode.uses_mse() {
                            mse_sum += mse_feature_loss(f_t, &trace.feature)?;
                            for (d, g) in dfeature.iter_mut().zip(mse_feature_grad(f_t, &trace.feature)?) {
                                *d += objective.beta * g;
                            }
                        }
                        if let Some(hash) = &t.hash {
                            let (l, g) = hash.loss_and_grad(f_t, &trace.feature)?;
                            lsh_sum += l;
                            for (d, g) in dfeature.iter_mut().zip(g) {
                                *d += objective.beta * g;
                            }
                        }
                    }
                }
                let g = student.backward(&trace, &dlogits, &dfeature)?.flatten();
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = cfg.lr / batch.len() as f64;
            for (p, g) in params[objective.trainable.clone()]
                .iter_mut()
                .zip(&grad[objective.trainable.clone()])
            {
                *p -= scale * g;
            }
            student.set_flat_params(&params)?;
        }
        if snapshots.len() == avg_last_k {
            snapshots.pop_front();
        }
        snapshots.push_back(params.clone());

        let n = data.len() as f64;
        let (ce, mse, lsh) = (ce_sum / n, mse_sum / n, lsh_sum / n);
        let beta = if mimic.is_some() { objective.beta } else { 0.0 };
        let (train, test) = match objective.teacher {
            Some(t) => (
                Some(feature_stats(t.model, student, data)?),
                eval.map(|e| feature_stats(t.model, student, e)).transpose()?,
            ),
            None => (None, None),
        };
        log.push(EpochLog {
            stage: objective.stage.to_string(),
            epoch,
            ce,
            mse,
            lsh,
            beta,
            total: objective.ce_weight * ce + beta * (mse + lsh),
            train,
            test,
        });
    }
    student.set_flat_params(&average_snapshots(&snapshots))?;
    Ok(log)
}

/// Arithmetic mean of parameter snapshots, summed in insertion order.
pub fn average_snapshots(snapshots: &VecDeque<Vec<f64>>) -> Vec<f64> {
    let k = snapshots.len() as f64;
    let mut sum = vec![0.0; snapshots.front().map_or(0, Vec::len)];
    for snap in snapshots {
        for (s, v) in sum.iter_mut().zip(snap) {
            *s += v;
        }
    }
    sum.into_iter().map(|s| s / k).collect()
}

/// Cross-entropy training without a teacher.
pub fn train_vanilla(model: &Mlp, data: &Dataset, eval: Option<&Dataset>, cfg: &DistillConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut student = model.clone();
    let objective = Objective {
        teacher: None,
        mode: LossMode::Ce,
        ce_weight: 1.0,
        beta: 0.0,
        trainable: 0..student.num_params(),
        stage: "vanilla",
    };
    let log = sgd(&mut student, data, eval, cfg, &objective, cfg.avg_last_k)?;
    Ok(TrainOutcome {
        model: student,
        log,
        stats: None,
    })
}

fn check_feature_dims(teacher: &Mlp, student: &Mlp) -> Result<()> {
    if teacher.feature_dim() != student.feature_dim() {
        return Err(Error::Config(format!(
            "teacher feature dim {} != student feature dim {}; add an embedding layer",
            teacher.feature_dim(),
            student.feature_dim()
        )));
    }
    Ok(())
}

/// Trains `student` on `CE + β(MSE + LSH)` (terms selected by
/// `cfg.loss_mode`) against the frozen `teacher`. The returned model is the
/// mean of the last `cfg.avg_last_k` epoch-end snapshots.
pub fn distill(
    teacher: &Mlp,
    student: &Mlp,
    data: &Dataset,
    eval: Option<&Dataset>,
    cfg: &DistillConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_feature_dims(teacher, student)?;
    let targets = TeacherTargets::new(teacher, data, cfg)?;
    let mut model = student.clone();
    let objective = Objective {
        teacher: Some(&targets),
        mode: cfg.loss_mode,
        ce_weight: 1.0,
        beta: cfg.beta,
        trainable: 0..model.num_params(),
        stage: "distill",
    };
    let log = sgd(&mut model, data, eval, cfg, &objective, cfg.avg_last_k)?;
    let stats = feature_stats(teacher, &model, data)?;
    Ok(TrainOutcome {
        model,
        log,
        stats: Some(stats),
    })
}

/// Stage 1 only: the backbone and classifier are frozen and the embedding
/// is fitted to the teacher features with the unweighted mimicking loss
/// of `mode` (no classification term, no averaging).
pub fn align_embedding(
    teacher: &Mlp,
    student: &Mlp,
    data: &Dataset,
    eval: Option<&Dataset>,
    cfg: &DistillConfig,
    mode: LossMode,
) -> Result<TrainOutcome> {
    let range = student
        .param_layout()
        .embedding
        .ok_or_else(|| Error::Config("alignment needs a student with an embedding layer".into()))?;
    if !mode.mimics() {
        return Err(Error::Config("alignment stage needs a mimicking loss, not ce".into()));
    }
    let stage_cfg = DistillConfig {
        loss_mode: mode,
        avg_last_k: 1,
        ..cfg.clone()
    };
    stage_cfg.validate()?;
    check_feature_dims(teacher, student)?;
    let targets = TeacherTargets::new(
        teacher,
        data,
        &DistillConfig {
            beta: 1.0,
            ..stage_cfg.clone()
        },
    )?;
    let mut model = student.clone();
    let objective = Objective {
        teacher: Some(&targets),
        mode,
        ce_weight: 0.0,
        beta: 1.0,
        trainable: range,
        stage: "align",
    };
    let log = sgd(&mut model, data, eval, &stage_cfg, &objective, 1)?;
    let stats = feature_stats(teacher, &model, data)?;
    Ok(TrainOutcome {
        model,
        log,
        stats: Some(stats),
    })
}

/// Embedding-only alignment followed by full distillation with `stage2`.
pub fn two_stage_finetune(
    teacher: &Mlp,
    student: &Mlp,
    data: &Dataset,
    eval: Option<&Dataset>,
    cfg: &DistillConfig,
    stage1: LossMode,
    stage2: LossMode,
) -> Result<TrainOutcome> {
    let aligned = align_embedding(teacher, student, data, eval, cfg, stage1)?;
    let stage2_cfg = DistillConfig {
        loss_mode: stage2,
        ..cfg.clone()
    };
    let mut full = distill(teacher, &aligned.model, data, eval, &stage2_cfg)?;
    let mut log = aligned.log;
    log.append(&mut full.log);
    full.log = log;
    Ok(full)
}

/// A student whose backbone is the teacher's followed by a fixed linear map
/// `f ↦ R f`, so its backbone features are exactly the teacher's rotated by
/// `rotation`. The teacher's classifier is reused.
pub fn rotated_student(teacher: &Mlp, rotation: &Matrix, embedding: Option<LinearLayer>) -> Result<Mlp> {
    let d = teacher.feature_dim();
    if rotation.rows() != d || rotation.cols() != d {
        return Err(invalid(format!("rotation must be {d}x{d}")));
    }
    if teacher.embedding().is_some() {
        return Err(invalid("teacher must not have an embedding layer"));
    }
    let mut hidden = teacher.hidden().to_vec();
    // forward is Wᵀa, so W = Rᵀ gives R a.
    hidden.push(HiddenLayer {
        layer: LinearLayer::new(rotation.transpose(), vec![0.0; d])?,
        activation: Activation::Identity,
    });
    Mlp::new(teacher.input_dim(), hidden, embedding, teacher.classifier().clone())
}

/// The desk-scale blob benchmark, with calibrated defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobTask {
    pub n_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub spread: f64,
    pub teacher_hidden: Vec<usize>,
    pub student_hidden: Vec<usize>,
    pub teacher_epochs: usize,
    pub teacher_lr: f64,
}

impl Default for BlobTask {
    fn default() -> Self {
        Self::calibrated()
    }
}

impl BlobTask {
    /// Settings tuned so that a CE-only student lands between 60% and 95%
    /// test accuracy.
    pub fn calibrated() -> Self {
        Self {
            n_classes: 10,
            dim: 16,
            samples_per_class: 30,
            spread: 1.0,
            teacher_hidden: vec![64, 32],
            student_hidden: vec![12],
            teacher_epochs: 60,
            teacher_lr: 0.05,
        }
    }

    pub fn teacher_feature_dim(&self) -> usize {
        *self.teacher_hidden.last().unwrap_or(&self.dim)
    }

    pub fn student_backbone_dim(&self) -> usize {
        *self.student_hidden.last().unwrap_or(&self.dim)
    }

    pub fn data(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let mut rng = RngStream::new(seed).substream(streams::DATA);
        generate_blobs(self.n_classes, self.dim, self.samples_per_class, self.spread, &mut rng)
    }

    pub fn train_teacher(&self, seed: u64, train: &Dataset) -> Result<Mlp> {
        let mut rng = RngStream::new(seed).substream(streams::TEACHER_INIT);
        let init = Mlp::random(self.dim, &self.teacher_hidden, None, self.n_classes, &mut rng)?;
        let cfg = DistillConfig {
            lr: self.teacher_lr,
            epochs: self.teacher_epochs,
            loss_mode: LossMode::Ce,
            avg_last_k: 1,
            seed,
            ..DistillConfig::default()
        };
        Ok(train_vanilla(&init, train, None, &cfg)?.model)
    }

    /// Fresh student. With `use_embedding` the student gets a linear layer
    /// to the teacher's feature dimension; without it the backbone output is
    /// the feature.
    pub fn init_student(&self, seed: u64, use_embedding: bool) -> Result<Mlp> {
        let mut rng = RngStream::new(seed).substream(streams::STUDENT_INIT);
        let emb = use_embedding.then(|| self.teacher_feature_dim());
        Mlp::random(self.dim, &self.student_hidden, emb, self.n_classes, &mut rng)
    }
}
