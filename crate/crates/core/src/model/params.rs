//! Trainable parameters.
//!
//! [`ParamTree`] is generic over its leaves so the same layout carries parameter
//! matrices, tape handles, gradients and optimizer moments. A tensor exists only
//! when the configuration uses it.

use rand::Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

/// Per-modality parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch<M> {
    /// hidden × d_m
    pub projection: M,
    /// 1 × hidden
    pub projection_bias: M,
    pub norm_gain: Option<M>,
    pub norm_shift: Option<M>,
    /// 1 × hidden
    pub scorer: Option<M>,
    /// 1 × 1
    pub scorer_bias: Option<M>,
    /// 1 × hidden
    pub gate: Option<M>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTree<M> {
    pub audio: Option<Branch<M>>,
    pub visual: Option<Branch<M>>,
    /// 2 × fused_dim
    pub classifier: M,
    /// 1 × 2
    pub classifier_bias: M,
}

pub type ModelParams<T> = ParamTree<Matrix<T>>;

impl<M> Branch<M> {
    fn try_map<U, E>(&self, prefix: &str, f: &mut impl FnMut(&str, &M) -> Result<U, E>) -> Result<Branch<U>, E> {
        let projection = f(&format!("{prefix}.proj.weight"), &self.projection)?;
        let projection_bias = f(&format!("{prefix}.proj.bias"), &self.projection_bias)?;
        let mut opt = |name: &str, m: &Option<M>| -> Result<Option<U>, E> {
            m.as_ref().map(|m| f(&format!("{prefix}.{name}"), m)).transpose()
        };
        Ok(Branch {
            projection,
            projection_bias,
            norm_gain: opt("norm.gain", &self.norm_gain)?,
            norm_shift: opt("norm.shift", &self.norm_shift)?,
            scorer: opt("pool.weight", &self.scorer)?,
            scorer_bias: opt("pool.bias", &self.scorer_bias)?,
            gate: opt("gate.weight", &self.gate)?,
        })
    }

    fn for_each_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut M)) {
        f(&format!("{prefix}.proj.weight"), &mut self.projection);
        f(&format!("{prefix}.proj.bias"), &mut self.projection_bias);
        for (name, slot) in [
            ("norm.gain", &mut self.norm_gain),
            ("norm.shift", &mut self.norm_shift),
            ("pool.weight", &mut self.scorer),
            ("pool.bias", &mut self.scorer_bias),
            ("gate.weight", &mut self.gate),
        ] {
            if let Some(m) = slot {
                f(&format!("{prefix}.{name}"), m);
            }
        }
    }
}

impl<M> ParamTree<M> {
    /// Maps every leaf in canonical order: audio branch, visual branch, classifier.
    pub fn try_map<U, E>(&self, mut f: impl FnMut(&str, &M) -> Result<U, E>) -> Result<ParamTree<U>, E> {
        Ok(ParamTree {
            audio: self.audio.as_ref().map(|b| b.try_map("audio", &mut f)).transpose()?,
            visual: self.visual.as_ref().map(|b| b.try_map("visual", &mut f)).transpose()?,
            classifier: f("classifier.weight", &self.classifier)?,
            classifier_bias: f("classifier.bias", &self.classifier_bias)?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &M) -> U) -> ParamTree<U> {
        self.try_map::<U, std::convert::Infallible>(|n, m| Ok(f(n, m)))
            .unwrap_or_else(|e| match e {})
    }

    pub fn for_each(&self, mut f: impl FnMut(&str, &M)) {
        self.map(|n, m| f(n, m));
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut M)) {
        if let Some(b) = &mut self.audio {
            b.for_each_mut("audio", &mut f);
        }
        if let Some(b) = &mut self.visual {
            b.for_each_mut("visual", &mut f);
        }
        f("classifier.weight", &mut self.classifier);
        f("classifier.bias", &mut self.classifier_bias);
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each(|n, _| out.push(n.to_string()));
        out
    }

    pub fn leaves(&self) -> Vec<&M> {
        let mut out = Vec::new();
        if let Some(b) = &self.audio {
            push_branch(b, &mut out);
        }
        if let Some(b) = &self.visual {
            push_branch(b, &mut out);
        }
        out.push(&self.classifier);
        out.push(&self.classifier_bias);
        out
    }

    pub fn leaves_mut(&mut self) -> Vec<&mut M> {
        let mut out = Vec::new();
        if let Some(b) = &mut self.audio {
            push_branch_mut(b, &mut out);
        }
        if let Some(b) = &mut self.visual {
            push_branch_mut(b, &mut out);
        }
        out.push(&mut self.classifier);
        out.push(&mut self.classifier_bias);
        out
    }
}

fn push_branch_mut<'a, M>(b: &'a mut Branch<M>, out: &mut Vec<&'a mut M>) {
    out.push(&mut b.projection);
    out.push(&mut b.projection_bias);
    for m in [
        &mut b.norm_gain,
        &mut b.norm_shift,
        &mut b.scorer,
        &mut b.scorer_bias,
        &mut b.gate,
    ]
    .into_iter()
    .flatten()
    {
        out.push(m);
    }
}

fn push_branch<'a, M>(b: &'a Branch<M>, out: &mut Vec<&'a M>) {
    out.push(&b.projection);
    out.push(&b.projection_bias);
    for m in [&b.norm_gain, &b.norm_shift, &b.scorer, &b.scorer_bias, &b.gate]
        .into_iter()
        .flatten()
    {
        out.push(m);
    }
}

fn uniform<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, limit: f64, rng: &mut R) -> Matrix<T> {
    let data = (0..rows * cols)
        .map(|_| T::of(rng.random_range(-limit..=limit)))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("finite init")
}

fn xavier<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    uniform(rows, cols, (6.0 / (rows + cols) as f64).sqrt(), rng)
}

/// Range of the uniform initialization of pooling scorers and gate vectors.
pub const SMALL_INIT: f64 = 1e-2;

impl<T: Scalar> ModelParams<T> {
    /// Shapes the configuration requires, filled with zeros.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self::build(cfg, &mut |r, c, _| Matrix::zeros(r, c))
    }

    /// Glorot-uniform projections and classifier, near-zero scorers and gates, zero biases.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        Self::build(cfg, &mut |r, c, kind| match kind {
            Init::Xavier => xavier(r, c, rng),
            Init::Small => uniform(r, c, SMALL_INIT, rng),
            Init::Zeros => Matrix::zeros(r, c),
            Init::Ones => Matrix::filled(r, c, T::one()),
        })
    }

    fn build(cfg: &ModelConfig, make: &mut impl FnMut(usize, usize, Init) -> Matrix<T>) -> Self {
        let d = cfg.hidden;
        let mut branch = |d_in: usize| Branch {
            projection: make(d, d_in, Init::Xavier),
            projection_bias: make(1, d, Init::Zeros),
            norm_gain: cfg.projection_activation.then(|| make(1, d, Init::Ones)),
            norm_shift: cfg.projection_activation.then(|| make(1, d, Init::Zeros)),
            scorer: cfg.pooling.has_scorer().then(|| make(1, d, Init::Small)),
            scorer_bias: cfg.pooling.has_scorer().then(|| make(1, 1, Init::Zeros)),
            gate: cfg.has_gate().then(|| make(1, d, Init::Small)),
        };
        let audio = cfg.modalities.uses_audio().then(|| branch(cfg.d_audio));
        let visual = cfg.modalities.uses_visual().then(|| branch(cfg.d_visual));
        ParamTree {
            audio,
            visual,
            classifier: make(2, cfg.fused_dim(), Init::Xavier),
            classifier_bias: make(1, 2, Init::Zeros),
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_, m| Matrix::zeros(m.rows(), m.cols()))
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        self.map(|_, m| m.cast())
    }

    pub fn num_scalars(&self) -> usize {
        self.leaves().iter().map(|m| m.len()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.leaves().iter().map(|m| m.norm_sq().as_f64()).sum::<f64>().sqrt()
    }

    /// Per-tensor L2 norms, for diagnostics.
    pub fn norms(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        self.for_each(|n, m| out.push((n.to_string(), m.norm_sq().as_f64().sqrt())));
        out
    }

    /// Checks that every tensor has the shape `cfg` requires.
    pub fn check_layout(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = Self::zeros(cfg);
        let want: Vec<(String, (usize, usize))> = {
            let mut v = Vec::new();
            expected.for_each(|n, m| v.push((n.to_string(), m.shape())));
            v
        };
        let mut got = Vec::new();
        self.for_each(|n, m| got.push((n.to_string(), m.shape())));
        if want != got {
            return Err(Error::contract(format!(
                "parameter layout {got:?} does not match configuration {want:?}"
            )));
        }
        Ok(())
    }

    /// Rebuilds parameters from named tensors; names and shapes must match `cfg` exactly.
    pub fn from_named(cfg: &ModelConfig, mut named: Vec<(String, Matrix<T>)>) -> Result<Self> {
        let template = Self::zeros(cfg);
        let out = template.try_map(|name, m| {
            let pos = named
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::contract(format!("missing parameter {name}")))?;
            let (_, value) = named.swap_remove(pos);
            if value.shape() != m.shape() {
                return Err(Error::Dimension {
                    op: "load parameter",
                    lhs: m.shape(),
                    rhs: value.shape(),
                });
            }
            Ok(value)
        })?;
        if let Some((n, _)) = named.first() {
            return Err(Error::contract(format!("unexpected parameter {n}")));
        }
        Ok(out)
    }

    pub fn into_named(&self) -> Vec<(String, Matrix<T>)> {
        let mut out = Vec::new();
        self.for_each(|n, m| out.push((n.to_string(), m.clone())));
        out
    }
}

#[derive(Clone, Copy)]
enum Init {
    Xavier,
    Small,
    Zeros,
    Ones,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_follows_config() {
        let cfg = ModelConfig {
            d_audio: 5,
            d_visual: 3,
            hidden: 4,
            ..Default::default()
        };
        let p = ModelParams::<f32>::zeros(&cfg);
        assert_eq!(
            p.names(),
            [
                "audio.proj.weight",
                "audio.proj.bias",
                "audio.norm.gain",
                "audio.norm.shift",
                "audio.pool.weight",
                "audio.pool.bias",
                "audio.gate.weight",
                "visual.proj.weight",
                "visual.proj.bias",
                "visual.norm.gain",
                "visual.norm.shift",
                "visual.pool.weight",
                "visual.pool.bias",
                "visual.gate.weight",
                "classifier.weight",
                "classifier.bias",
            ]
        );
        assert_eq!(p.audio.as_ref().unwrap().projection.shape(), (4, 5));
        assert_eq!(p.classifier.shape(), (2, 4));

        let concat = ModelParams::<f32>::zeros(&cfg.clone().with_variant(Variant::Concat));
        assert_eq!(concat.classifier.shape(), (2, 8));
        assert!(concat.audio.as_ref().unwrap().gate.is_none());

        let mean = ModelParams::<f32>::zeros(&cfg.clone().with_variant(Variant::MeanPool));
        assert!(mean.visual.as_ref().unwrap().scorer.is_none());

        let audio = ModelParams::<f32>::zeros(&cfg.clone().with_variant(Variant::AudioOnly));
        assert!(audio.visual.is_none());
        assert!(audio.audio.as_ref().unwrap().gate.is_none());
    }

    #[test]
    fn init_ranges() {
        let cfg = ModelConfig {
            d_audio: 16,
            d_visual: 8,
            hidden: 32,
            ..Default::default()
        };
        let p = ModelParams::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let a = p.audio.as_ref().unwrap();
        let lim = (6.0f32 / 48.0).sqrt();
        assert!(a.projection.max_abs() <= lim);
        assert!(a.scorer.as_ref().unwrap().max_abs() <= 1e-2);
        assert_eq!(a.scorer_bias.as_ref().unwrap().item(), Some(0.0));
        assert!(a.norm_gain.as_ref().unwrap().as_slice().iter().all(|&g| g == 1.0));
        assert!(p.check_layout(&cfg).is_ok());
    }

    #[test]
    fn named_round_trip_and_rejections() {
        let cfg = ModelConfig {
            d_audio: 3,
            d_visual: 2,
            hidden: 2,
            ..Default::default()
        };
        let p = ModelParams::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        let named = p.into_named();
        assert_eq!(ModelParams::from_named(&cfg, named.clone()).unwrap(), p);
        let mut missing = named.clone();
        missing.pop();
        assert!(ModelParams::<f32>::from_named(&cfg, missing).is_err());
        let mut extra = named;
        extra.push(("bogus".into(), Matrix::zeros(1, 1)));
        assert!(ModelParams::<f32>::from_named(&cfg, extra).is_err());
    }
}
