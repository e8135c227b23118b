use eakd::data::{generate_blobs, BlobSpec, Dataset};
use eakd::distill::{kd_loss_values, WeightingMode};
use eakd::models::{forward, init, MlpSpec, ModelParams};
use eakd::par::Execution;
use eakd::trainer::{distill_student, distill_student_from, evaluate, train_teacher, TrainConfig};

fn small_blobs(spread: f64) -> (Dataset, Dataset) {
    generate_blobs(&BlobSpec {
        class_count: 5,
        dims: 4,
        samples_per_class: 40,
        spread,
        center_scale: 1.0,
        seed: 11,
    })
    .unwrap()
}

fn config(epochs: usize) -> TrainConfig {
    let mut c = TrainConfig::new(5);
    c.epochs = epochs;
    c.batch_size = 16;
    c.learning_rate = 0.05;
    c.lr_decay_epochs = vec![epochs.saturating_sub(1).max(1)];
    c
}

fn teacher(train: &Dataset, val: &Dataset) -> ModelParams {
    let spec = MlpSpec::new(4, vec![24], 5).unwrap();
    train_teacher(&spec, train, val, &config(6), Execution::Sequential).unwrap().params
}

fn bits(p: &ModelParams) -> Vec<u64> {
    p.named().iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits())).collect()
}

#[test]
fn separable_blobs_are_learned() {
    let (train, val) = small_blobs(0.01);
    let spec = MlpSpec::new(4, vec![32], 5).unwrap();
    let out = train_teacher(&spec, &train, &val, &config(20), Execution::Sequential).unwrap();
    assert!(out.final_val_accuracy() >= 0.99, "{}", out.final_val_accuracy());
}

#[test]
fn teacher_training_is_deterministic() {
    let (train, val) = small_blobs(0.8);
    let spec = MlpSpec::new(4, vec![16], 5).unwrap();
    let a = train_teacher(&spec, &train, &val, &config(3), Execution::Sequential).unwrap();
    let b = train_teacher(&spec, &train, &val, &config(3), Execution::Sequential).unwrap();
    assert_eq!(bits(&a.params), bits(&b.params));
    assert_eq!(a.log, b.log);
}

#[test]
fn distillation_is_deterministic_and_leaves_teacher_alone() {
    let (train, val) = small_blobs(0.8);
    let t = teacher(&train, &val);
    let before = bits(&t);
    let student = MlpSpec::new(4, vec![8], 5).unwrap();
    let mut cfg = config(3);
    cfg.distill.weighting_mode = WeightingMode::Ea;
    let a = distill_student(&t, &student, &train, &val, &cfg, Execution::Sequential).unwrap();
    let b = distill_student(&t, &student, &train, &val, &cfg, Execution::Parallel).unwrap();
    assert_eq!(bits(&t), before);
    assert_eq!(bits(&a.params), bits(&b.params));
    assert_eq!(a.log, b.log);
}

#[test]
fn zero_distillation_weight_reduces_to_cross_entropy() {
    let (train, val) = small_blobs(0.8);
    let t = teacher(&train, &val);
    let student = MlpSpec::new(4, vec![8], 5).unwrap();
    let mut cfg = config(4);
    cfg.seed = 3;
    cfg.distill.kd_weight = 0.0;
    let distilled = distill_student(&t, &student, &train, &val, &cfg, Execution::Sequential).unwrap();
    let plain = train_teacher(&student, &train, &val, &cfg, Execution::Sequential).unwrap();
    assert_eq!(bits(&distilled.params), bits(&plain.params));
    let acc = |l: &[eakd::trainer::TrainRecord]| l.iter().map(|r| r.acc_student).collect::<Vec<_>>();
    assert_eq!(acc(&distilled.log), acc(&plain.log));
}

#[test]
fn objective_is_mean_kd_without_cross_entropy() {
    let (train, val) = small_blobs(0.8);
    let t = teacher(&train, &val);
    let student = MlpSpec::new(4, vec![8], 5).unwrap();
    let mut cfg = config(2);
    cfg.distill.ce_weight = 0.0;
    let out = distill_student(&t, &student, &train, &val, &cfg, Execution::Sequential).unwrap();
    for r in &out.log {
        assert_eq!(r.loss_total, r.loss_kd);
    }
}

#[test]
fn identical_student_starts_with_zero_kd() {
    let (train, val) = small_blobs(0.8);
    let t = teacher(&train, &val);
    let x = train.features();
    let kd = kd_loss_values(&forward(&t, x).unwrap(), &forward(&t.clone(), x).unwrap(), 4.0).unwrap();
    assert!(kd.per_sample.iter().all(|&l| l == 0.0));

    let mut cfg = config(1);
    cfg.learning_rate = 1e-300;
    let out = distill_student_from(&t, t.clone(), &train, &val, &cfg, Execution::Sequential).unwrap();
    assert!(out.log[0].loss_kd.abs() < 1e-12, "{}", out.log[0].loss_kd);
}

#[test]
fn logged_weights_and_shares_are_well_formed() {
    let (train, val) = small_blobs(0.8);
    let t = teacher(&train, &val);
    let student = MlpSpec::new(4, vec![8], 5).unwrap();
    let bound = 5f64.ln();
    for mode in WeightingMode::ALL {
        let mut cfg = config(2);
        cfg.distill.weighting_mode = mode;
        let out = distill_student(&t, &student, &train, &val, &cfg, Execution::Sequential).unwrap();
        for r in &out.log {
            assert!(0.0 <= r.weight_min && r.weight_max <= bound, "{mode}: {r:?}");
            assert!(r.weight_min <= r.weight_mean && r.weight_mean <= r.weight_max);
            assert!((r.quartile_shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&r.acc_student) && (0.0..=1.0).contains(&r.acc_teacher));
            assert!(r.student_entropy_box.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

#[test]
fn parallel_evaluation_matches_sequential() {
    let (train, val) = small_blobs(0.8);
    let p = init(&MlpSpec::new(4, vec![16, 16], 5).unwrap(), 9);
    for ds in [&train, &val] {
        assert_eq!(
            evaluate(&p, ds, 1.0, Execution::Sequential).unwrap(),
            evaluate(&p, ds, 1.0, Execution::Parallel).unwrap()
        );
    }
}
