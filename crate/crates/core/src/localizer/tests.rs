use super::*;
use crate::model::{Modalities, Pooling};

fn close_all(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn sharpen_examples() {
    let a = [0.1, 0.2, 0.3, 0.4];
    assert!(close_all(&sharpen(&a, 1.0).unwrap(), &a, 1e-12));
    let s = sharpen(&[0.2, 0.8], 0.5).unwrap();
    assert!(close_all(&s, &[0.04 / 0.68, 0.64 / 0.68], 1e-12));
    assert!((s[0] - 0.0588).abs() < 1e-4);
    let u = sharpen(&[0.25; 4], 0.1).unwrap();
    assert!(close_all(&u, &[0.25; 4], 1e-12));
    assert!(sharpen(&[0.0, 0.0], 0.5).is_err());
    assert!(sharpen(&[0.5, 0.5], 0.0).is_err());
}

#[test]
fn sharpen_survives_underflow() {
    // 1e-30^(1/0.05) underflows in direct evaluation
    let s = sharpen(&[1e-30, 1.0 - 1e-30], 0.05).unwrap();
    assert!(s.iter().all(|v| v.is_finite()));
    assert_eq!(s[1], 1.0);
}

#[test]
fn align_examples() {
    let a = [0.1, 0.2, 0.3, 0.4];
    for m in [AlignMethod::MaxPool, AlignMethod::Interpolate] {
        assert!(close_all(&align(&a, 4, m).unwrap(), &a, 1e-15));
        assert!(close_all(&align(&[0.25; 4], 7, m).unwrap(), &[1.0 / 7.0; 7], 1e-15));
    }
    assert_eq!(align(&[0.1, 0.9, 0.0, 0.0], 2, AlignMethod::MaxPool).unwrap(), vec![1.0, 0.0]);
}

#[test]
fn align_upsampling() {
    // T = 2, N = 4: max-pool copies the covering timestep, interpolation ramps
    let m = align(&[0.2, 0.8], 4, AlignMethod::MaxPool).unwrap();
    assert!(close_all(&m, &[0.1, 0.1, 0.4, 0.4], 1e-15));
    let i = align(&[0.2, 0.8], 4, AlignMethod::Interpolate).unwrap();
    // bin centers at timestep coordinates -0.25, 0.25, 0.75, 1.25 (clamped)
    let raw = [0.2, 0.35, 0.65, 0.8];
    let total: f64 = raw.iter().sum();
    assert!(close_all(&i, &raw.map(|v| v / total), 1e-15));
}

#[test]
fn combine_examples() {
    let a = [0.8, 0.2];
    let v = [0.2, 0.8];
    assert_eq!(combine(Some(&a), Some(&v), 1.0, 0.0).unwrap(), a.to_vec());
    assert_eq!(combine(Some(&[1.0, 0.0]), Some(&[0.0, 1.0]), 0.5, 0.5).unwrap(), vec![0.5, 0.5]);
    assert!(close_all(&combine(Some(&a), Some(&v), 0.75, 0.25).unwrap(), &[0.65, 0.35], 1e-15));
    assert_eq!(combine(None, Some(&v), 0.0, 1.0).unwrap(), v.to_vec());
    assert!(combine(Some(&a), Some(&[1.0]), 0.5, 0.5).is_err());
}

#[test]
fn peak_expand_examples() {
    let p = peak_expand(&[0.1, 0.6, 0.2, 0.05, 0.05], 5.0).unwrap();
    assert_eq!((p.peak_bin, p.first_bin, p.last_bin), (1, 1, 1));
    assert_eq!((p.start_s, p.end_s), (1.0, 2.0));

    let p = peak_expand(&[0.2; 5], 5.0).unwrap();
    assert_eq!((p.peak_bin, p.start_s, p.end_s), (0, 0.0, 1.0));

    let p = peak_expand(&[0.4, 0.0, 0.4, 0.1, 0.1], 5.0).unwrap();
    assert_eq!((p.peak_bin, p.first_bin, p.last_bin), (0, 0, 0));

    let p = peak_expand(&[0.05, 0.3, 0.4, 0.25, 0.0], 5.0).unwrap();
    assert_eq!((p.first_bin, p.last_bin), (1, 3));
    assert_eq!((p.start_s, p.end_s), (1.0, 4.0));
}

fn output(alpha_a: Vec<f64>, alpha_v: Vec<f64>, w_audio: f64) -> ForwardOutput<f64> {
    use crate::model::BranchOutput;
    let branch = |a: Vec<f64>| BranchOutput {
        scores: None,
        attention: Some(a),
        pooled: vec![0.0],
    };
    ForwardOutput {
        logits: [0.0, 1.0],
        label: 1,
        audio: Some(branch(alpha_a)),
        visual: Some(branch(alpha_v)),
        w_audio,
        w_visual: 1.0 - w_audio,
        fused: vec![0.0],
        pooling: Pooling::SoftmaxTanh,
        modalities: Modalities::Both,
    }
}

#[test]
fn localize_concentrated_audio() {
    // 5 s at 50 Hz: timesteps 100..125 cover 2.0-2.5 s
    let mut a = vec![0.1; 250];
    for v in &mut a[100..125] {
        *v = 3.0;
    }
    let total: f64 = a.iter().sum();
    let a: Vec<f64> = a.iter().map(|v| v / total).collect();
    let out = output(a, vec![1.0 / 50.0; 50], 0.9);
    let r = localize(&out, &LocalizerConfig::default(), 5.0).unwrap();
    assert!(!r.fallback);
    assert_eq!((r.start_s, r.end_s), (2.0, 2.5));
    assert!(r.peak_s > 2.0 && r.peak_s < 2.5);
    assert!((r.beta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn localize_fallback_and_single_modality() {
    let mut out = output(vec![0.5, 0.5], vec![0.5, 0.5], 0.5);
    out.pooling = Pooling::Mean;
    let r = localize(&out, &LocalizerConfig::default(), 5.0).unwrap();
    assert!(r.fallback);
    assert_eq!((r.start_s, r.end_s, r.peak_s), (0.0, 5.0, 2.5));

    let mut out = output(vec![0.1, 0.6, 0.3], vec![], 1.0);
    out.visual = None;
    out.w_visual = 0.0;
    out.modalities = Modalities::AudioOnly;
    let cfg = LocalizerConfig {
        n_bins: 3,
        ..Default::default()
    };
    let r = localize(&out, &cfg, 3.0).unwrap();
    let expect = align(&sharpen(&[0.1, 0.6, 0.3], 0.5).unwrap(), 3, AlignMethod::MaxPool).unwrap();
    assert_eq!(r.beta, expect);
}

#[test]
fn config_validation() {
    assert!(LocalizerConfig::default().validate().is_ok());
    for bad in [
        LocalizerConfig {
            tau: 0.0,
            ..Default::default()
        },
        LocalizerConfig {
            tau: 1.5,
            ..Default::default()
        },
        LocalizerConfig {
            n_bins: 0,
            ..Default::default()
        },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn prediction_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.jsonl");
    let out = output(vec![0.2, 0.8], vec![0.5, 0.5], 0.7);
    let loc = localize(&out, &LocalizerConfig::default(), 5.0).unwrap();
    let recs = vec![PredictionRecord::new("seg-1", 0.73, loc)];
    write_predictions(&path, &recs).unwrap();
    assert_eq!(read_predictions(&path).unwrap(), recs);
}
