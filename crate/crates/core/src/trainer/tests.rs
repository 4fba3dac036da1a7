use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::model::SegmentInputs;
use crate::numerics::Matrix;

#[test]
fn class_weight_examples() {
    let w = compute_class_weights(std::iter::repeat_n(0, 100).chain(std::iter::repeat_n(1, 100))).unwrap();
    assert_eq!(w, [1.0, 1.0]);
    let w = compute_class_weights(std::iter::repeat_n(0, 300).chain(std::iter::repeat_n(1, 100))).unwrap();
    assert!((w[0] - 2.0 / 3.0).abs() < 1e-12 && w[1] == 2.0);
    let w = compute_class_weights(std::iter::repeat_n(0, 2904).chain(std::iter::repeat_n(1, 883))).unwrap();
    assert!((w[0] - 0.652).abs() < 5e-4 && (w[1] - 2.144).abs() < 5e-4, "{w:?}");
    let err = compute_class_weights([0, 0, 0]).unwrap_err();
    assert!(err.to_string().contains("auto_class_weights"));
}

#[test]
fn early_stopping_rule() {
    let mut s = EarlyStopping::new(1);
    assert_eq!(s.observe(1, 0.5), (true, false));
    assert_eq!(s.observe(2, 0.6), (false, true));
    assert_eq!(s.best(), Some((1, 0.5)));

    let mut s = EarlyStopping::new(2);
    s.observe(1, 0.5);
    s.observe(2, 0.5); // equal is not an improvement
    assert_eq!(s.observe(3, 0.4), (true, false));
    assert_eq!(s.best(), Some((3, 0.4)));
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    for bad in [
        TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        },
        TrainConfig {
            batch_size: 0,
            ..Default::default()
        },
        TrainConfig {
            early_stop_patience: 0,
            ..Default::default()
        },
    ] {
        assert!(bad.validate().unwrap_err().is_validation());
    }
}

/// Clip-level toy task: positives carry a shifted block of audio frames.
fn toy_set(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = u8::from(i % 2 == 0);
            let mut a: Vec<f32> = (0..20 * 4).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
            let mut v: Vec<f32> = (0..4 * 3).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
            if label == 1 {
                let at = rng.random_range(0..15);
                for t in at..at + 5 {
                    a[t * 4] += 3.0;
                    a[t * 4 + 1] -= 3.0;
                }
                v[0] += 1.0;
            }
            Sample {
                id: format!("s{i}"),
                label,
                duration_s: 2.0,
                inputs: SegmentInputs {
                    audio: Some(Matrix::from_vec(20, 4, a).unwrap()),
                    visual: Some(Matrix::from_vec(4, 3, v).unwrap()),
                },
            }
        })
        .collect()
}

fn toy_model() -> ModelConfig {
    ModelConfig {
        d_audio: 4,
        d_visual: 3,
        hidden: 8,
        dropout_p: 0.1,
        ..Default::default()
    }
}

fn toy_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 8,
        max_epochs: 20,
        early_stop_patience: 3,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn training_learns_and_is_deterministic() {
    let train_set = toy_set(64, 1);
    let val_set = toy_set(32, 2);
    let mut seen = 0;
    let a = train(&train_set, &val_set, &toy_model(), &toy_train(), |_| seen += 1).unwrap();
    assert_eq!(seen, a.report.epochs.len());
    let e = &a.report.epochs;
    assert!(e[0].train_loss > e[1].train_loss && e[1].train_loss > e[2].train_loss, "{e:?}");
    let best = a.report.best_epoch;
    assert!(e.iter().all(|x| x.val_loss >= e[best - 1].val_loss));
    assert!(e[best - 1].val_f1 >= 0.9, "{e:?}");
    assert_eq!(a.report.class_weights, [1.0, 1.0]);

    let b = train(&train_set, &val_set, &toy_model(), &toy_train(), |_| {}).unwrap();
    assert_eq!(a.report.trajectory(), b.report.trajectory());
    assert_eq!(a.params, b.params);
}

#[test]
fn best_epoch_params_are_returned() {
    let train_set = toy_set(32, 3);
    let val_set = toy_set(16, 4);
    let out = train(&train_set, &val_set, &toy_model(), &toy_train(), |_| {}).unwrap();
    let (loss, _) = validate(&out.params, &out.config, &val_set).unwrap();
    assert_eq!(loss, out.report.best_val_loss);
}

#[test]
fn thread_count_does_not_change_results() {
    let train_set = toy_set(24, 5);
    let val_set = toy_set(8, 6);
    let cfg = TrainConfig {
        max_epochs: 2,
        ..toy_train()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&train_set, &val_set, &toy_model(), &cfg, |_| {}).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.params, b.params);
    assert_eq!(a.report.trajectory(), b.report.trajectory());
}

#[test]
fn duplicated_batch_has_single_sample_gradient() {
    let s = &toy_set(1, 7)[0];
    let cfg = ModelConfig {
        dropout_p: 0.0,
        ..toy_model()
    };
    let params = ModelParams::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
    let one = loss_and_grads(&params, &cfg, &s.inputs, s.label, Mode::Eval).unwrap().grads;
    let mut mean = params.zeros_like();
    for _ in 0..4 {
        let g = loss_and_grads(&params, &cfg, &s.inputs, s.label, Mode::Eval).unwrap().grads;
        for (acc, g) in mean.leaves_mut().into_iter().zip(g.leaves()) {
            acc.axpy(0.25, g).unwrap();
        }
    }
    for (a, b) in mean.leaves().iter().zip(one.leaves()) {
        assert!(a.sub(b).unwrap().max_abs() <= 1e-6 * (1.0 + b.max_abs()));
    }
}

#[test]
fn empty_splits_are_rejected() {
    let s = toy_set(4, 8);
    assert!(train(&s, &[], &toy_model(), &toy_train(), |_| {}).is_err());
}

#[test]
fn missing_feature_file_names_segment() {
    use crate::datamodel::{SegmentRecord, Split};
    let rec = SegmentRecord {
        id: "seg-42".into(),
        duration_s: 5.0,
        label: 0,
        split: Split::Train,
        feature_path: "/nonexistent/seg-42.mmf".into(),
        events: vec![],
    };
    match load_samples(&[rec], &toy_model()) {
        Err(Error::MissingFeatures { id, .. }) => assert_eq!(id, "seg-42"),
        other => panic!("unexpected {other:?}"),
    }
}
