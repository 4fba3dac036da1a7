//! End-to-end gradient verification of the model in 64-bit arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::ModelConfig;
use super::forward::{loss_and_grads, loss_only, Mode, SegmentInputs};
use super::params::ModelParams;
use crate::error::Result;
use crate::numerics::{finite_diff_check, GradCheckReport, Matrix};

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-6;

/// Shape of the randomized instance used for gradient checks.
#[derive(Debug, Clone)]
pub struct GradCheckSetup {
    pub hidden: usize,
    pub d_audio: usize,
    pub d_visual: usize,
    pub t_audio: usize,
    pub t_visual: usize,
}

impl Default for GradCheckSetup {
    fn default() -> Self {
        GradCheckSetup {
            hidden: 8,
            d_audio: 6,
            d_visual: 5,
            t_audio: 12,
            t_visual: 6,
        }
    }
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("finite")
}

/// A random model and batch for `base`. Only the architecture switches of `base`
/// are used; sizes come from `setup`.
pub fn random_instance(
    base: &ModelConfig,
    setup: &GradCheckSetup,
    seed: u64,
) -> (ModelConfig, ModelParams<f64>, Vec<(SegmentInputs<f64>, u8)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig {
        hidden: setup.hidden,
        d_audio: setup.d_audio,
        d_visual: setup.d_visual,
        dropout_p: 0.0,
        class_weights: [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)],
        ..base.clone()
    };
    // every tensor gets O(1) random values so no gradient is trivially zero
    let mut params = ModelParams::<f64>::zeros(&cfg);
    params.for_each_mut(|name, m| {
        let scale = if name.ends_with("proj.weight") || name.starts_with("classifier") {
            0.6
        } else {
            0.4
        };
        let mut g = gaussian(m.rows(), m.cols(), scale, &mut rng);
        if name.ends_with("norm.gain") {
            g = g.map(|v| 1.0 + v);
        }
        *m = g;
    });
    // a 2-sample batch with one segment of each class
    let mut batch = Vec::with_capacity(2);
    for label in [0u8, 1] {
        let inputs = SegmentInputs {
            audio: cfg
                .modalities
                .uses_audio()
                .then(|| gaussian(setup.t_audio, setup.d_audio, 1.0, &mut rng)),
            visual: cfg
                .modalities
                .uses_visual()
                .then(|| gaussian(setup.t_visual, setup.d_visual, 1.0, &mut rng)),
        };
        batch.push((inputs, label));
    }
    (cfg, params, batch)
}

/// Compares analytic focal-loss gradients with central differences for every
/// parameter of a random instance of `base`.
///
/// `corrupt` names a parameter whose analytic gradient is perturbed before the
/// comparison; it exists to prove the check can fail.
pub fn check_model_gradients(
    base: &ModelConfig,
    setup: &GradCheckSetup,
    seed: u64,
    corrupt: Option<&str>,
) -> Result<GradCheckReport> {
    let (cfg, params, batch) = random_instance(base, setup, seed);
    let scale = 1.0 / batch.len() as f64;
    let mut analytic = params.zeros_like();
    for (inputs, label) in &batch {
        let g = loss_and_grads(&params, &cfg, inputs, *label, Mode::Eval)?.grads;
        for (acc, v) in analytic.leaves_mut().into_iter().zip(g.leaves()) {
            acc.axpy(scale, v)?;
        }
    }
    if let Some(target) = corrupt {
        analytic.for_each_mut(|name, g| {
            if name == target {
                let v = g.as_slice()[0];
                g.as_mut_slice()[0] = v * 1.5 + 0.1;
            }
        });
    }
    let names = params.names();
    let flat: Vec<Matrix<f64>> = params.leaves().into_iter().cloned().collect();
    let grads: Vec<Matrix<f64>> = analytic.leaves().into_iter().cloned().collect();
    finite_diff_check(
        &flat,
        &names,
        &grads,
        |p| {
            let named = names.iter().cloned().zip(p.iter().cloned()).collect();
            let rebuilt = ModelParams::from_named(&cfg, named)?;
            let mut total = 0.0;
            for (inputs, label) in &batch {
                total += loss_only(&rebuilt, &cfg, inputs, *label)?.0;
            }
            Ok(total * scale)
        },
        GRADCHECK_EPS,
    )
}
