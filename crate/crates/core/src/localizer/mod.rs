//! Post-hoc localization from attention: sharpen, align to bins, combine by the
//! modality gate, then grow an interval around the peak bin.

mod predictions;

pub use predictions::{read_predictions, write_predictions, PredictionRecord};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ForwardOutput;
use crate::numerics::Scalar;

/// Floor applied before taking logs during sharpening.
pub const SHARPEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMethod {
    MaxPool,
    Interpolate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizerConfig {
    pub tau: f64,
    pub n_bins: usize,
    pub audio_align: AlignMethod,
    pub visual_align: AlignMethod,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        LocalizerConfig {
            tau: 0.5,
            n_bins: 50,
            audio_align: AlignMethod::MaxPool,
            visual_align: AlignMethod::Interpolate,
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(format!("tau {} outside (0, 1]", self.tau)));
        }
        if self.n_bins == 0 {
            return Err(Error::config("n_bins must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub label: u8,
    pub start_s: f64,
    pub end_s: f64,
    /// Combined bin attention; uniform when the model has no attention to offer.
    pub beta: Vec<f64>,
    pub peak_bin: usize,
    /// Center of the peak bin in seconds.
    pub peak_s: f64,
    pub w_audio: f64,
    pub w_visual: f64,
    /// True when the pooling mode has no attention and the whole segment is returned.
    pub fallback: bool,
}

/// Temperature sharpening `a^(1/tau)`, renormalized, computed in log space.
pub fn sharpen(alpha: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::contract(format!("tau {tau} outside (0, 1]")));
    }
    if alpha.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
        return Err(Error::contract("attention must be finite and non-negative"));
    }
    if alpha.iter().all(|&a| a == 0.0) {
        return Err(Error::contract("cannot sharpen an all-zero attention vector"));
    }
    let logs: Vec<f64> = alpha.iter().map(|&a| a.max(SHARPEN_FLOOR).ln() / tau).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|v| v / total).collect())
}

fn renormalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
    v
}

/// Resamples a length-T attention vector to `n_bins` bins and renormalizes it.
///
/// Max pooling takes, for bin k, the maximum over timesteps t with
/// `floor(t * N / T) == k`; a bin no timestep falls into (T < N) takes the
/// timestep under its center. Interpolation samples bin centers from the
/// piecewise-linear curve through timestep centers, held constant past the ends.
pub fn align(alpha: &[f64], n_bins: usize, method: AlignMethod) -> Result<Vec<f64>> {
    let t_len = alpha.len();
    if t_len == 0 || n_bins == 0 {
        return Err(Error::contract("alignment needs at least one timestep and one bin"));
    }
    let out = match method {
        AlignMethod::MaxPool => {
            let mut bins = vec![f64::NEG_INFINITY; n_bins];
            for (t, &a) in alpha.iter().enumerate() {
                let k = t * n_bins / t_len;
                bins[k] = bins[k].max(a);
            }
            for (k, b) in bins.iter_mut().enumerate() {
                if *b == f64::NEG_INFINITY {
                    let t = ((2 * k + 1) * t_len / (2 * n_bins)).min(t_len - 1);
                    *b = alpha[t];
                }
            }
            bins
        }
        AlignMethod::Interpolate => (0..n_bins)
            .map(|k| {
                let x = ((k as f64 + 0.5) * t_len as f64 / n_bins as f64 - 0.5).clamp(0.0, (t_len - 1) as f64);
                let lo = x.floor() as usize;
                let hi = (lo + 1).min(t_len - 1);
                let frac = x - lo as f64;
                alpha[lo] * (1.0 - frac) + alpha[hi] * frac
            })
            .collect(),
    };
    Ok(renormalize(out))
}

/// `w_a * audio + w_v * visual`; a single present modality is returned as is.
pub fn combine(audio: Option<&[f64]>, visual: Option<&[f64]>, w_audio: f64, w_visual: f64) -> Result<Vec<f64>> {
    match (audio, visual) {
        (Some(a), Some(v)) => {
            if a.len() != v.len() {
                return Err(Error::Dimension {
                    op: "combine",
                    lhs: (1, a.len()),
                    rhs: (1, v.len()),
                });
            }
            Ok(a.iter().zip(v).map(|(&x, &y)| w_audio * x + w_visual * y).collect())
        }
        (Some(a), None) => Ok(a.to_vec()),
        (None, Some(v)) => Ok(v.to_vec()),
        (None, None) => Err(Error::contract("nothing to combine")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub peak_bin: usize,
    /// Inclusive bin range.
    pub first_bin: usize,
    pub last_bin: usize,
}

/// Grows a contiguous bin range from the argmax (earliest on ties) while the
/// neighbouring bin strictly exceeds the mean of `beta`.
pub fn peak_expand(beta: &[f64], duration_s: f64) -> Result<PeakInterval> {
    if beta.is_empty() {
        return Err(Error::contract("peak expansion over zero bins"));
    }
    let n = beta.len();
    let mut peak = 0;
    for (i, &b) in beta.iter().enumerate() {
        if b > beta[peak] {
            peak = i;
        }
    }
    let mean = beta.iter().sum::<f64>() / n as f64;
    let (mut lo, mut hi) = (peak, peak);
    while lo > 0 && beta[lo - 1] > mean {
        lo -= 1;
    }
    while hi + 1 < n && beta[hi + 1] > mean {
        hi += 1;
    }
    let delta = duration_s / n as f64;
    Ok(PeakInterval {
        start_s: lo as f64 * delta,
        end_s: if hi + 1 == n { duration_s } else { (hi + 1) as f64 * delta },
        peak_bin: peak,
        first_bin: lo,
        last_bin: hi,
    })
}

/// Full localization of one segment from its forward output.
///
/// Pooling modes without attention return the whole segment with a uniform β;
/// their peak is the segment midpoint.
pub fn localize<T: Scalar>(out: &ForwardOutput<T>, cfg: &LocalizerConfig, duration_s: f64) -> Result<LocalizationResult> {
    cfg.validate()?;
    let n = cfg.n_bins;
    let w_audio = out.w_audio.as_f64();
    let w_visual = out.w_visual.as_f64();
    if !out.pooling.has_attention() {
        return Ok(LocalizationResult {
            label: out.label,
            start_s: 0.0,
            end_s: duration_s,
            beta: vec![1.0 / n as f64; n],
            peak_bin: (n / 2).min(n - 1),
            peak_s: duration_s / 2.0,
            w_audio,
            w_visual,
            fallback: true,
        });
    }
    let prep = |alpha: Option<&[T]>, method| -> Result<Option<Vec<f64>>> {
        alpha
            .map(|a| {
                let a: Vec<f64> = a.iter().map(|v| v.as_f64()).collect();
                align(&sharpen(&a, cfg.tau)?, n, method)
            })
            .transpose()
    };
    let audio = prep(out.alpha_audio(), cfg.audio_align)?;
    let visual = prep(out.alpha_visual(), cfg.visual_align)?;
    let beta = combine(audio.as_deref(), visual.as_deref(), w_audio, w_visual)?;
    let peak = peak_expand(&beta, duration_s)?;
    Ok(LocalizationResult {
        label: out.label,
        start_s: peak.start_s,
        end_s: peak.end_s,
        peak_bin: peak.peak_bin,
        peak_s: (peak.peak_bin as f64 + 0.5) * duration_s / n as f64,
        beta,
        w_audio,
        w_visual,
        fallback: false,
    })
}

#[cfg(test)]
mod tests;
