//! Randomized invariants of pooling, fusion, localization and metrics.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use weakloc::evaluator::{iou, Interval};
use weakloc::localizer::{align, localize, peak_expand, sharpen, AlignMethod, LocalizerConfig};
use weakloc::model::{forward, Fusion, Mode, ModelConfig, ModelParams, Pooling, SegmentInputs};
use weakloc::Matrix;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-4.0f64..4.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

/// A small model with random parameters and random inputs of random length.
fn instance(pooling: Pooling, fusion: Fusion) -> impl Strategy<Value = (ModelConfig, ModelParams<f64>, SegmentInputs<f64>)> {
    (1usize..12, 1usize..6, any::<u64>()).prop_flat_map(move |(ta, tv, seed)| {
        let cfg = ModelConfig {
            d_audio: 3,
            d_visual: 2,
            hidden: 4,
            pooling,
            fusion,
            ..Default::default()
        };
        let params = ModelParams::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).cast::<f64>();
        (matrix(ta, 3), matrix(tv, 2)).prop_map(move |(a, v)| {
            let inputs = SegmentInputs {
                audio: Some(a),
                visual: Some(v),
            };
            (cfg.clone(), params.clone(), inputs)
        })
    })
}

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, 1..40).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

fn interval() -> impl Strategy<Value = Interval> {
    (0.0f64..10.0, 0.0f64..5.0).prop_map(|(s, l)| Interval::new(s, s + l).unwrap())
}

fn first_max(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_is_a_distribution((cfg, params, inputs) in instance(Pooling::SoftmaxTanh, Fusion::SoftmaxGate)) {
        let out = forward(&params, &cfg, &inputs, Mode::Eval).unwrap();
        for alpha in [out.alpha_audio().unwrap(), out.alpha_visual().unwrap()] {
            prop_assert!(alpha.iter().all(|&a| a >= 0.0));
            prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tanh_scores_are_bounded((cfg, params, inputs) in instance(Pooling::SoftmaxTanh, Fusion::SoftmaxGate)) {
        let out = forward(&params, &cfg, &inputs, Mode::Eval).unwrap();
        for b in [out.audio.as_ref().unwrap(), out.visual.as_ref().unwrap()] {
            prop_assert!(b.scores.as_ref().unwrap().iter().all(|s| s.abs() <= 1.0));
        }
    }

    #[test]
    fn gate_weights_are_complementary(
        (cfg, params, inputs) in instance(Pooling::SoftmaxTanh, Fusion::SoftmaxGate),
        sigmoid in any::<bool>(),
    ) {
        let cfg = ModelConfig { fusion: if sigmoid { Fusion::SigmoidGate } else { Fusion::SoftmaxGate }, ..cfg };
        let out = forward(&params, &cfg, &inputs, Mode::Eval).unwrap();
        prop_assert!((out.w_audio + out.w_visual - 1.0).abs() < 1e-12);
        prop_assert!(out.w_audio >= 0.0 && out.w_visual >= 0.0);
    }

    #[test]
    fn pooled_vector_is_in_the_convex_hull(
        (cfg, params, inputs) in instance(Pooling::SoftmaxNoTanh, Fusion::SoftmaxGate),
        mean in any::<bool>(),
    ) {
        let cfg = ModelConfig { pooling: if mean { Pooling::Mean } else { Pooling::SoftmaxNoTanh }, ..cfg };
        let out = forward(&params, &cfg, &inputs, Mode::Eval).unwrap();
        let alpha = out.alpha_audio().unwrap();
        let pooled = &out.audio.as_ref().unwrap().pooled;
        // pooled = sum_t alpha_t h_t with alpha a distribution, so each coordinate is a convex combination
        prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let h = projected_audio(&params, &cfg, inputs.audio.as_ref().unwrap());
        for j in 0..h.cols() {
            let col: Vec<f64> = (0..h.rows()).map(|t| h.get(t, j)).collect();
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &x| (l.min(x), u.max(x)));
            prop_assert!(pooled[j] >= lo - 1e-12 && pooled[j] <= hi + 1e-12);
            let recon: f64 = col.iter().zip(alpha).map(|(x, a)| x * a).sum();
            prop_assert!((recon - pooled[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn permuting_timesteps_permutes_attention(
        (cfg, params, inputs) in instance(Pooling::SoftmaxTanh, Fusion::SoftmaxGate),
        rot in 0usize..12,
    ) {
        let a = inputs.audio.clone().unwrap();
        let t = a.rows();
        let perm: Vec<usize> = (0..t).map(|i| (i + rot) % t).collect();
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| a.row(i).to_vec()).collect();
        let permuted = SegmentInputs { audio: Some(Matrix::from_rows(&rows).unwrap()), visual: inputs.visual.clone() };
        let x = forward(&params, &cfg, &inputs, Mode::Eval).unwrap();
        let y = forward(&params, &cfg, &permuted, Mode::Eval).unwrap();
        let (ax, ay) = (x.alpha_audio().unwrap(), y.alpha_audio().unwrap());
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((ay[k] - ax[i]).abs() < 1e-12);
        }
        for (p, q) in x.audio.unwrap().pooled.iter().zip(&y.audio.unwrap().pooled) {
            prop_assert!((p - q).abs() < 1e-12);
        }
        prop_assert!((x.logits[1] - y.logits[1]).abs() < 1e-9);
    }

    #[test]
    fn localization_is_well_formed(
        (cfg, params, inputs) in instance(Pooling::SoftmaxTanh, Fusion::SoftmaxGate),
        duration in 0.5f64..20.0,
        tau in 0.05f64..=1.0,
        n_bins in 1usize..80,
    ) {
        let out = forward(&params, &cfg, &inputs, Mode::Eval).unwrap();
        let lc = LocalizerConfig { tau, n_bins, ..Default::default() };
        let r = localize(&out, &lc, duration).unwrap();
        prop_assert_eq!(r.beta.len(), n_bins);
        prop_assert!((r.beta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(0.0 <= r.start_s && r.start_s < r.end_s && r.end_s <= duration);
        prop_assert!(r.start_s <= r.peak_s && r.peak_s <= r.end_s);
    }

    #[test]
    fn sharpening_keeps_a_distribution_and_its_argmax(a in distribution(), tau in 0.05f64..=1.0) {
        let s = sharpen(&a, tau).unwrap();
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(first_max(&s), first_max(&a));
        prop_assert!(s[first_max(&a)] >= a[first_max(&a)] - 1e-12);
    }

    #[test]
    fn alignment_keeps_a_distribution(a in distribution(), n in 1usize..100, interp in any::<bool>()) {
        let m = if interp { AlignMethod::Interpolate } else { AlignMethod::MaxPool };
        let b = align(&a, n, m).unwrap();
        prop_assert_eq!(b.len(), n);
        prop_assert!(b.iter().all(|&x| x >= 0.0));
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn peak_expansion_contains_its_peak(b in distribution(), duration in 0.1f64..30.0) {
        let p = peak_expand(&b, duration).unwrap();
        prop_assert!(p.first_bin <= p.peak_bin && p.peak_bin <= p.last_bin && p.last_bin < b.len());
        prop_assert_eq!(p.peak_bin, first_max(&b));
        prop_assert!(0.0 <= p.start_s && p.end_s <= duration && p.start_s < p.end_s);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in interval(), b in interval()) {
        let x = iou(a, b);
        prop_assert_eq!(x, iou(b, a));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(iou(a, a), 1.0);
    }

    #[test]
    fn iou_is_translation_and_scale_invariant(a in interval(), b in interval(), shift in -5.0f64..5.0, scale in 0.1f64..10.0) {
        let x = iou(a, b);
        let t = |i: Interval| Interval::new(i.start_s + shift, i.end_s + shift).unwrap();
        let s = |i: Interval| Interval::new(i.start_s * scale, i.end_s * scale).unwrap();
        prop_assert!((iou(t(a), t(b)) - x).abs() < 1e-9);
        prop_assert!((iou(s(a), s(b)) - x).abs() < 1e-9);
    }
}

/// The audio projection (with LayerNorm and ReLU) evaluated directly from the parameters.
fn projected_audio(params: &ModelParams<f64>, cfg: &ModelConfig, x: &Matrix<f64>) -> Matrix<f64> {
    let b = params.audio.as_ref().unwrap();
    let mut h = x.matmul_nt(&b.projection).unwrap();
    for t in 0..h.rows() {
        let row = h.row_mut(t);
        for (v, bias) in row.iter_mut().zip(b.projection_bias.as_slice()) {
            *v += bias;
        }
        if cfg.projection_activation {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let gain = b.norm_gain.as_ref().unwrap().as_slice();
            let shift = b.norm_shift.as_ref().unwrap().as_slice();
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((*v - mean) / (var + weakloc::numerics::tape::LAYERNORM_EPS).sqrt() * gain[j] + shift[j]).max(0.0);
            }
        }
    }
    h
}
