//! Teacher pretraining and student distillation loops.

mod diagnostics;
mod log;
mod sgd;

pub use diagnostics::{
    entropy_quartiles, five_number_summary, quantile_sorted, quartile_shares, segment_gaps, top_decile,
};
pub use log::{format_train_log, parse_train_log, read_train_log, write_train_log, TrainRecord, TRAIN_LOG_HEADER};
pub use sgd::{sgd_step, SgdState};

use crate::data::{batches, Dataset};
use crate::distill::{
    cross_entropy, dkd_loss, entropy, kd_loss, reweighted_loss, DistillConfig, EntropyPair, LossKind,
    Reduction, SampleWeights, WeightingMode,
};
use crate::error::{Error, Result};
use crate::models::{forward, forward_graph, init, MlpSpec, ModelParams};
use crate::par::{self, Execution};
use crate::rng::epoch_seed;
use crate::tensor::{Graph, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs after which the learning rate is multiplied by `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub seed: u64,
    pub distill: DistillConfig,
    pub loss_kind: LossKind,
}

impl TrainConfig {
    pub fn new(class_count: usize) -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_decay_epochs: vec![20, 25],
            lr_decay_factor: 0.1,
            seed: 0,
            distill: DistillConfig::new(class_count),
            loss_kind: LossKind::Kd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if !self.lr_decay_epochs.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config(format!(
                "lr_decay_epochs must be strictly increasing, got {:?}",
                self.lr_decay_epochs
            )));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return Err(Error::config("lr_decay_factor must be positive"));
        }
        self.distill.validate()
    }

    /// Step-decayed learning rate of 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&d| epoch > d).count();
        self.learning_rate * self.lr_decay_factor.powi(decays as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<TrainRecord>,
}

impl TrainOutcome {
    pub fn final_val_accuracy(&self) -> f64 {
        self.log.last().map_or(0.0, |r| r.acc_student)
    }
}

/// Predictions of a model on a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub correct: Vec<bool>,
    /// Entropy of each prediction at the requested temperature.
    pub entropy: Vec<f64>,
    pub logits: Tensor,
}

const EVAL_CHUNK: usize = 256;

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Top-1 accuracy, predictions and entropies. Rows are processed in fixed
/// chunks and reassembled in order, so the result is identical for both
/// execution modes.
pub fn evaluate(params: &ModelParams, ds: &Dataset, temperature: f64, exec: Execution) -> Result<Evaluation> {
    let n = ds.len();
    let starts: Vec<usize> = (0..n).step_by(EVAL_CHUNK).collect();
    let chunks = par::try_map(exec, &starts, |&start| {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        forward(params, &ds.features().select_rows(&idx)?)
    })?;
    let c = chunks[0].shape()[1];
    let data: Vec<f64> = chunks.into_iter().flat_map(Tensor::into_data).collect();
    let logits = Tensor::matrix(n, c, data)?;
    if !logits.is_finite() {
        return Err(Error::input("model produced non-finite logits"));
    }
    let predictions: Vec<usize> = logits.rows().map(argmax).collect();
    let correct: Vec<bool> = predictions.iter().zip(ds.labels()).map(|(p, l)| p == l).collect();
    let accuracy = correct.iter().filter(|&&c| c).count() as f64 / n as f64;
    let entropy = entropy(&logits, temperature)?;
    Ok(Evaluation {
        accuracy,
        predictions,
        correct,
        entropy,
        logits,
    })
}

/// What the student is distilled from, prepared once per run.
struct TeacherView {
    train_logits: Tensor,
    val: Evaluation,
    quartile: Vec<usize>,
    top_decile: Vec<usize>,
}

struct StepTotals {
    samples: usize,
    total: f64,
    ce: f64,
    kd: f64,
    weight_min: f64,
    weight_max: f64,
    weight_sum: f64,
    weight_count: usize,
}

impl StepTotals {
    fn new() -> Self {
        StepTotals {
            samples: 0,
            total: 0.0,
            ce: 0.0,
            kd: 0.0,
            weight_min: f64::INFINITY,
            weight_max: f64::NEG_INFINITY,
            weight_sum: 0.0,
            weight_count: 0,
        }
    }

    fn add_weights(&mut self, w: &SampleWeights) {
        for &v in w.values() {
            self.weight_min = self.weight_min.min(v);
            self.weight_max = self.weight_max.max(v);
            self.weight_sum += v;
        }
        self.weight_count += w.len();
    }
}

fn per_sample_distill_loss(
    g: &mut Graph,
    teacher_logits: &Tensor,
    student_logits: crate::tensor::Var,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<crate::tensor::Var> {
    let d = &config.distill;
    match config.loss_kind {
        LossKind::Kd => kd_loss(g, teacher_logits, student_logits, d.distill_temperature),
        LossKind::Dkd => dkd_loss(
            g,
            teacher_logits,
            student_logits,
            labels,
            d.dkd_alpha,
            d.dkd_beta,
            d.distill_temperature,
        ),
    }
}

fn sample_weights(teacher_logits: &Tensor, student_logits: &Tensor, d: &DistillConfig) -> Result<SampleWeights> {
    if d.weighting_mode == WeightingMode::None {
        return Ok(SampleWeights::uniform(teacher_logits.shape()[0]));
    }
    let pair = EntropyPair::from_logits(teacher_logits, student_logits, d.entropy_temperature)?;
    SampleWeights::compute(d.weighting_mode, &pair)
}

/// Shared SGD loop. With a teacher the objective is
/// `ce_weight * CE + kd_weight * reweighted distillation loss`, otherwise plain CE.
fn fit(
    mut params: ModelParams,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    teacher: Option<&TeacherView>,
    exec: Execution,
) -> Result<TrainOutcome> {
    let d = &config.distill;
    let mut state = SgdState::new();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let lr = config.lr_at(epoch);
        let mut totals = StepTotals::new();
        for (step, batch) in batches(train, config.batch_size, epoch_seed(config.seed, epoch))?.enumerate() {
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let x = g.constant(batch.features);
            let logits = forward_graph(&mut g, &bound, x)?;
            let ce = cross_entropy(&mut g, logits, &batch.labels)?;

            let (total, kd_value) = match teacher {
                None => (ce, 0.0),
                Some(t) => {
                    let t_logits = t.train_logits.select_rows(&batch.indices)?;
                    let per_sample = per_sample_distill_loss(&mut g, &t_logits, logits, &batch.labels, config)?;
                    let weights = sample_weights(&t_logits, g.value(logits), d)?;
                    totals.add_weights(&weights);
                    let weights = if d.normalize_weights {
                        weights.mean_normalized()
                    } else {
                        weights
                    };
                    let kd = reweighted_loss(&mut g, per_sample, &weights, Reduction::Mean)?;
                    let kd_value = g.value(kd).item()?;
                    let ce_term = g.scale(ce, d.ce_weight);
                    let kd_term = g.scale(kd, d.kd_weight);
                    (g.add(ce_term, kd_term)?, kd_value)
                }
            };

            let total_value = g.value(total).item()?;
            if !total_value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    loss: total_value,
                });
            }
            let m = batch.labels.len() as f64;
            totals.samples += batch.labels.len();
            totals.total += total_value * m;
            totals.ce += g.value(ce).item()? * m;
            totals.kd += kd_value * m;

            g.backward(total)?;
            let grads: Vec<Option<&[f64]>> = bound.vars.iter().map(|&v| g.grad(v)).collect();
            sgd_step(&mut params, &grads, &mut state, lr, config.momentum, config.weight_decay)?;
        }

        let n = totals.samples as f64;
        let student = evaluate(&params, val, d.diagnostic_temperature, exec)?;
        let record = match teacher {
            Some(t) => distill_record(epoch, &totals, &student, t, val, config)?,
            None => teacher_record(epoch, &totals, &student, val)?,
        };
        debug_assert_eq!(n as usize, train.len());
        log.push(record);
    }
    Ok(TrainOutcome { params, log })
}

fn distill_record(
    epoch: usize,
    totals: &StepTotals,
    student: &Evaluation,
    teacher: &TeacherView,
    val: &Dataset,
    config: &TrainConfig,
) -> Result<TrainRecord> {
    let n = totals.samples as f64;
    let mut g = Graph::new();
    let s = g.constant(student.logits.clone());
    let per_sample = per_sample_distill_loss(&mut g, &teacher.val.logits, s, val.labels(), config)?;
    let weights = sample_weights(&teacher.val.logits, &student.logits, &config.distill)?;
    let weighted: Vec<f64> = g
        .value(per_sample)
        .data()
        .iter()
        .zip(weights.values())
        .map(|(l, w)| l * w)
        .collect();
    let decile: Vec<f64> = teacher.top_decile.iter().map(|&i| student.entropy[i]).collect();
    Ok(TrainRecord {
        epoch,
        loss_total: totals.total / n,
        loss_ce: totals.ce / n,
        loss_kd: totals.kd / n,
        acc_student: student.accuracy,
        acc_teacher: teacher.val.accuracy,
        quartile_shares: quartile_shares(&weighted, &teacher.quartile),
        segment_gaps: segment_gaps(&teacher.val.correct, &student.correct, &teacher.quartile),
        weight_min: totals.weight_min,
        weight_mean: totals.weight_sum / totals.weight_count as f64,
        weight_max: totals.weight_max,
        student_entropy_box: five_number_summary(&decile),
    })
}

/// Teacher runs have no distillation term: loss shares are of the model's own
/// validation cross-entropy, ranked by its own entropy, and the weight columns
/// hold the implicit uniform weight.
fn teacher_record(epoch: usize, totals: &StepTotals, model: &Evaluation, val: &Dataset) -> Result<TrainRecord> {
    let n = totals.samples as f64;
    let mut g = Graph::new();
    let z = g.constant(model.logits.clone());
    let log_p = g.log_softmax(z, 1.0)?;
    let picked = g.gather(log_p, val.labels())?;
    let ce: Vec<f64> = g.value(picked).data().iter().map(|v| -v).collect();
    let quartile = entropy_quartiles(&model.entropy);
    let decile: Vec<f64> = top_decile(&model.entropy).iter().map(|&i| model.entropy[i]).collect();
    Ok(TrainRecord {
        epoch,
        loss_total: totals.total / n,
        loss_ce: totals.ce / n,
        loss_kd: 0.0,
        acc_student: model.accuracy,
        acc_teacher: model.accuracy,
        quartile_shares: quartile_shares(&ce, &quartile),
        segment_gaps: [0.0; 4],
        weight_min: 1.0,
        weight_mean: 1.0,
        weight_max: 1.0,
        student_entropy_box: five_number_summary(&decile),
    })
}

fn check_data(train: &Dataset, val: &Dataset, class_count: usize) -> Result<()> {
    for ds in [train, val] {
        if ds.class_count() != class_count {
            return Err(Error::config(format!(
                "{} split has {} classes, configuration expects {class_count}",
                ds.split(),
                ds.class_count()
            )));
        }
    }
    if train.dim() != val.dim() {
        return Err(Error::config("train and validation feature widths differ"));
    }
    Ok(())
}

/// Cross-entropy training from a seeded Glorot initialization.
pub fn train_teacher(
    spec: &MlpSpec,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    exec: Execution,
) -> Result<TrainOutcome> {
    config.validate()?;
    spec.validate()?;
    check_data(train, val, spec.class_count)?;
    fit(init(spec, config.seed), train, val, config, None, exec)
}

/// Distills a freshly initialized student of `student_spec` from `teacher`.
pub fn distill_student(
    teacher: &ModelParams,
    student_spec: &MlpSpec,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    exec: Execution,
) -> Result<TrainOutcome> {
    student_spec.validate()?;
    distill_student_from(teacher, init(student_spec, config.seed), train, val, config, exec)
}

/// Distills starting from the given student parameters. `teacher` is only read.
pub fn distill_student_from(
    teacher: &ModelParams,
    student: ModelParams,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    exec: Execution,
) -> Result<TrainOutcome> {
    config.validate()?;
    let teacher_spec = MlpSpec::from_params(teacher)?;
    let student_spec = MlpSpec::from_params(&student)?;
    let c = config.distill.class_count;
    if teacher_spec.class_count != c || student_spec.class_count != c {
        return Err(Error::config(format!(
            "teacher outputs {} classes, student {}, configuration {c}",
            teacher_spec.class_count, student_spec.class_count
        )));
    }
    if teacher_spec.input_dim != train.dim() || student_spec.input_dim != train.dim() {
        return Err(Error::config(format!(
            "data has {} features, teacher expects {}, student {}",
            train.dim(),
            teacher_spec.input_dim,
            student_spec.input_dim
        )));
    }
    check_data(train, val, c)?;
    let view = prepare_teacher(teacher, train, val, config, exec)?;
    fit(student, train, val, config, Some(&view), exec)
}

fn prepare_teacher(
    teacher: &ModelParams,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    exec: Execution,
) -> Result<TeacherView> {
    let train_logits = evaluate(teacher, train, 1.0, exec)?.logits;
    let val = evaluate(teacher, val, config.distill.diagnostic_temperature, exec)?;
    let quartile = entropy_quartiles(&val.entropy);
    let top_decile = top_decile(&val.entropy);
    Ok(TeacherView {
        train_logits,
        val,
        quartile,
        top_decile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_blobs, BlobSpec, Split};

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::new(10);
        c.validate().unwrap();
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        c.momentum = 0.9;
        c.lr_decay_epochs = vec![5, 5];
        assert!(c.validate().is_err());
        c.lr_decay_epochs = vec![];
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn lr_schedule_steps_after_listed_epochs() {
        let mut c = TrainConfig::new(10);
        c.learning_rate = 1.0;
        c.lr_decay_epochs = vec![2, 4];
        let lrs: Vec<f64> = (1..=5).map(|e| c.lr_at(e)).collect();
        assert_eq!(lrs[..2], [1.0, 1.0]);
        assert!((lrs[2] - 0.1).abs() < 1e-15 && (lrs[3] - 0.1).abs() < 1e-15);
        assert!((lrs[4] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
    }

    #[test]
    fn hand_built_evaluation() {
        // 2 -> 3 identity-like linear model
        let p = ModelParams::from_named(vec![
            (
                crate::models::weight_name(0),
                Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap(),
            ),
            (crate::models::bias_name(0), Tensor::vector(vec![0.0, 0.0, 0.5])),
        ]);
        let x = Tensor::from_rows(&[[2.0, 0.0], [0.0, 2.0], [0.0, 0.0]]).unwrap();
        // predictions: 0, 1, 2
        let ds = Dataset::new(x, vec![0, 2, 2], 3, Split::Val).unwrap();
        let e = evaluate(&p, &ds, 1.0, Execution::Sequential).unwrap();
        assert_eq!(e.predictions, vec![0, 1, 2]);
        assert_eq!(e.correct, vec![true, false, true]);
        assert!((e.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_model_predicts_class_zero_at_max_entropy() {
        let spec = BlobSpec {
            class_count: 4,
            dims: 3,
            samples_per_class: 10,
            ..BlobSpec::default()
        };
        let (_, val) = generate_blobs(&spec).unwrap();
        let mut p = init(&MlpSpec::new(3, vec![5], 4).unwrap(), 0);
        p.tensors_mut().for_each(|t| t.data_mut().fill(0.0));
        let e = evaluate(&p, &val, 1.0, Execution::Sequential).unwrap();
        let freq0 = val.labels().iter().filter(|&&l| l == 0).count() as f64 / val.len() as f64;
        assert_eq!(e.accuracy, freq0);
        assert!(e.entropy.iter().all(|&h| (h - 4f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn class_count_mismatch_is_config_error() {
        let spec = BlobSpec {
            class_count: 3,
            dims: 2,
            samples_per_class: 10,
            ..BlobSpec::default()
        };
        let (train, val) = generate_blobs(&spec).unwrap();
        let teacher = init(&MlpSpec::new(2, vec![4], 4).unwrap(), 0);
        let student = MlpSpec::new(2, vec![3], 3).unwrap();
        let cfg = TrainConfig::new(3);
        let err = distill_student(&teacher, &student, &train, &val, &cfg, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn divergence_is_reported() {
        let spec = BlobSpec {
            class_count: 3,
            dims: 2,
            samples_per_class: 10,
            center_scale: 1e150,
            ..BlobSpec::default()
        };
        let (train, val) = generate_blobs(&spec).unwrap();
        let mut cfg = TrainConfig::new(3);
        cfg.epochs = 3;
        cfg.learning_rate = 1e10;
        let err = train_teacher(&MlpSpec::new(2, vec![8], 3).unwrap(), &train, &val, &cfg, Execution::Sequential)
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. } | Error::Input(_)), "{err}");
    }
}
