//! Forward pass: projection, temporal pooling, modality fusion, classifier, focal loss.

use rand::RngCore;

use super::config::{Fusion, ModelConfig, Modalities, Pooling};
use super::params::{Branch, ModelParams, ParamTree};
use crate::datamodel::FeatureSequence;
use crate::error::{Error, Result};
use crate::numerics::{Axis, Matrix, Scalar, Tape, Var};

pub const AUDIO_STREAM: &str = "audio";
pub const VISUAL_STREAM: &str = "visual";

/// Feature matrices for one segment (time-major, T × d_m).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInputs<T> {
    pub audio: Option<Matrix<T>>,
    pub visual: Option<Matrix<T>>,
}

impl SegmentInputs<f32> {
    /// Picks the streams named `audio` and `visual` that `cfg` needs.
    pub fn from_streams(streams: &[FeatureSequence], cfg: &ModelConfig) -> Result<Self> {
        let find = |name: &str| -> Result<Matrix<f32>> {
            streams
                .iter()
                .find(|s| s.name == name)
                .map(|s| s.values.clone())
                .ok_or_else(|| Error::contract(format!("feature file has no {name:?} stream")))
        };
        Ok(SegmentInputs {
            audio: cfg.modalities.uses_audio().then(|| find(AUDIO_STREAM)).transpose()?,
            visual: cfg.modalities.uses_visual().then(|| find(VISUAL_STREAM)).transpose()?,
        })
    }
}

impl<T: Scalar> SegmentInputs<T> {
    pub fn cast<U: Scalar>(&self) -> SegmentInputs<U> {
        SegmentInputs {
            audio: self.audio.as_ref().map(Matrix::cast),
            visual: self.visual.as_ref().map(Matrix::cast),
        }
    }
}

/// Whether dropout is active. Training mode carries the RNG that draws dropout masks.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

/// Per-modality intermediate results.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchOutput<T> {
    /// Pre-softmax scores, softmax pooling modes only.
    pub scores: Option<Vec<T>>,
    /// Attention over timesteps; absent for max pooling.
    pub attention: Option<Vec<T>>,
    pub pooled: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub logits: [T; 2],
    pub label: u8,
    pub audio: Option<BranchOutput<T>>,
    pub visual: Option<BranchOutput<T>>,
    pub w_audio: T,
    pub w_visual: T,
    pub fused: Vec<T>,
    pub pooling: Pooling,
    pub modalities: Modalities,
}

impl<T: Scalar> ForwardOutput<T> {
    pub fn alpha_audio(&self) -> Option<&[T]> {
        self.audio.as_ref().and_then(|b| b.attention.as_deref())
    }

    pub fn alpha_visual(&self) -> Option<&[T]> {
        self.visual.as_ref().and_then(|b| b.attention.as_deref())
    }

    /// Softmax probability of the positive class.
    pub fn positive_prob(&self) -> T {
        let [a, b] = self.logits;
        crate::numerics::tape::sigmoid(b - a)
    }
}

/// Handles of the recorded graph.
pub struct Graph<T> {
    pub params: ParamTree<(usize, Var)>,
    pub logits: Var,
    pub output: ForwardOutput<T>,
}

struct BranchVars {
    pooled: Var,
    scores: Option<Var>,
    attention: Option<Var>,
}

/// Linear projection to the hidden size, then LayerNorm and ReLU when enabled.
pub fn project<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    branch: &Branch<(usize, Var)>,
    cfg: &ModelConfig,
) -> Result<Var> {
    let (_, w) = branch.projection;
    if tape.shape(x).1 != tape.shape(w).1 {
        return Err(Error::Dimension {
            op: "project",
            lhs: tape.shape(x),
            rhs: tape.shape(w),
        });
    }
    let h = tape.matmul_nt(x, w)?;
    let h = tape.add_bias(h, branch.projection_bias.1)?;
    if !cfg.projection_activation {
        return Ok(h);
    }
    let (Some((_, g)), Some((_, s))) = (branch.norm_gain, branch.norm_shift) else {
        return Err(Error::contract("projection activation enabled without norm parameters"));
    };
    let h = tape.layernorm(h, g, s)?;
    Ok(tape.relu(h))
}

/// Pools a projected T × d sequence to 1 × d. Returns the pooled vector, the
/// pre-softmax scores (softmax modes) and the attention (all modes except max).
pub fn temporal_pool<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    scorer: Option<(Var, Var)>,
    mode: Pooling,
) -> Result<(Var, Option<Var>, Option<Var>)> {
    let t = tape.shape(h).0;
    if t == 0 {
        return Err(Error::contract("temporal pooling over zero timesteps"));
    }
    match mode {
        Pooling::SoftmaxTanh | Pooling::SoftmaxNoTanh => {
            let (w, b) = scorer.ok_or_else(|| Error::contract("softmax pooling without scorer"))?;
            let e = tape.matmul_nt(h, w)?;
            // Without tanh the shared bias cancels inside the softmax, so it is left
            // out; its gradient is then exactly zero rather than roundoff noise.
            let e = if mode == Pooling::SoftmaxTanh {
                let e = tape.add_bias(e, b)?;
                tape.tanh(e)
            } else {
                e
            };
            let alpha = tape.softmax(e, Axis::Column);
            let f = tape.weighted_sum(alpha, h)?;
            Ok((f, Some(e), Some(alpha)))
        }
        Pooling::Mean => {
            let alpha = tape.constant(Matrix::filled(t, 1, T::one() / T::of(t as f64)));
            let f = tape.weighted_sum(alpha, h)?;
            Ok((f, None, Some(alpha)))
        }
        Pooling::Max => Ok((tape.max_over_rows(h)?, None, None)),
    }
}

/// Fuses two pooled 1 × d vectors. Returns the fused vector and the 1 × 1 weights.
pub fn fuse<T: Scalar>(
    tape: &mut Tape<T>,
    fa: Var,
    fv: Var,
    gates: Option<(Var, Var)>,
    mode: Fusion,
) -> Result<(Var, Option<(Var, Var)>)> {
    if tape.shape(fa) != tape.shape(fv) {
        return Err(Error::Dimension {
            op: "fuse",
            lhs: tape.shape(fa),
            rhs: tape.shape(fv),
        });
    }
    if mode == Fusion::Concat {
        return Ok((tape.concat_cols(fa, fv)?, None));
    }
    let (wga, wgv) = gates.ok_or_else(|| Error::contract("gated fusion without gate vectors"))?;
    let ga = tape.dot(fa, wga)?;
    let gv = tape.dot(fv, wgv)?;
    let (wa, wv) = match mode {
        Fusion::SoftmaxGate => {
            let g = tape.concat_cols(ga, gv)?;
            let w = tape.softmax(g, Axis::Row);
            (tape.slice_cols(w, 0, 1)?, tape.slice_cols(w, 1, 1)?)
        }
        Fusion::SigmoidGate => {
            let diff = tape.sub(ga, gv)?;
            let wa = tape.sigmoid(diff);
            let wv = tape.affine(wa, -T::one(), T::one());
            (wa, wv)
        }
        Fusion::Concat => unreachable!(),
    };
    let sa = tape.scale_by(wa, fa)?;
    let sv = tape.scale_by(wv, fv)?;
    Ok((tape.add(sa, sv)?, Some((wa, wv))))
}

/// Dropout (training only) followed by the affine map to two logits.
pub fn classify<T: Scalar>(
    tape: &mut Tape<T>,
    fused: Var,
    weight: Var,
    bias: Var,
    dropout_p: f64,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let x = match mode {
        Mode::Train(rng) => tape.dropout(fused, dropout_p, *rng)?,
        Mode::Eval => fused,
    };
    let z = tape.matmul_nt(x, weight)?;
    tape.add_bias(z, bias)
}

/// Registers every parameter on the tape; ids follow canonical parameter order.
pub fn register<T: Scalar>(tape: &mut Tape<T>, params: &ModelParams<T>) -> ParamTree<(usize, Var)> {
    let mut next = 0usize;
    params.map(|_, m| {
        let id = next;
        next += 1;
        (id, tape.param(id, m.clone()))
    })
}

fn run_branch<T: Scalar>(
    tape: &mut Tape<T>,
    x: &Matrix<T>,
    branch: &Branch<(usize, Var)>,
    cfg: &ModelConfig,
) -> Result<BranchVars> {
    let xv = tape.constant(x.clone());
    let h = project(tape, xv, branch, cfg)?;
    let scorer = match (branch.scorer, branch.scorer_bias) {
        (Some((_, w)), Some((_, b))) => Some((w, b)),
        _ => None,
    };
    let (pooled, scores, attention) = temporal_pool(tape, h, scorer, cfg.pooling)?;
    Ok(BranchVars {
        pooled,
        scores,
        attention,
    })
}

fn column<T: Scalar>(tape: &Tape<T>, v: Var) -> Vec<T> {
    tape.value(v).as_slice().to_vec()
}

fn finish_branch<T: Scalar>(tape: &Tape<T>, b: &BranchVars) -> BranchOutput<T> {
    BranchOutput {
        scores: b.scores.map(|v| column(tape, v)),
        attention: b.attention.map(|v| column(tape, v)),
        pooled: column(tape, b.pooled),
    }
}

/// Records the full forward pass on `tape`.
pub fn forward_graph<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    inputs: &SegmentInputs<T>,
    mut mode: Mode<'_>,
) -> Result<Graph<T>> {
    let vars = register(tape, params);
    let branch = |tape: &mut Tape<T>, x: &Option<Matrix<T>>, b: &Option<Branch<(usize, Var)>>, name: &str| {
        match (x, b) {
            (Some(x), Some(b)) => run_branch(tape, x, b, cfg).map(Some),
            (None, Some(_)) => Err(Error::contract(format!("missing {name} features"))),
            _ => Ok(None),
        }
    };
    let audio = branch(tape, &inputs.audio, &vars.audio, AUDIO_STREAM)?;
    let visual = branch(tape, &inputs.visual, &vars.visual, VISUAL_STREAM)?;

    let half = T::of(0.5);
    let (fused, w_audio, w_visual) = match (&audio, &visual) {
        (Some(a), Some(v)) => {
            let gates = match (
                vars.audio.as_ref().and_then(|b| b.gate),
                vars.visual.as_ref().and_then(|b| b.gate),
            ) {
                (Some((_, ga)), Some((_, gv))) => Some((ga, gv)),
                _ => None,
            };
            let (fused, weights) = fuse(tape, a.pooled, v.pooled, gates, cfg.fusion)?;
            match weights {
                Some((wa, wv)) => (
                    fused,
                    tape.value(wa).as_slice()[0],
                    tape.value(wv).as_slice()[0],
                ),
                None => (fused, half, half),
            }
        }
        (Some(a), None) => (a.pooled, T::one(), T::zero()),
        (None, Some(v)) => (v.pooled, T::zero(), T::one()),
        (None, None) => return Err(Error::contract("no modality enabled")),
    };

    let logits = classify(
        tape,
        fused,
        vars.classifier.1,
        vars.classifier_bias.1,
        cfg.dropout_p,
        &mut mode,
    )?;
    let z = tape.value(logits).as_slice();
    let logits_arr = [z[0], z[1]];
    let output = ForwardOutput {
        logits: logits_arr,
        label: u8::from(logits_arr[1] > logits_arr[0]),
        audio: audio.as_ref().map(|b| finish_branch(tape, b)),
        visual: visual.as_ref().map(|b| finish_branch(tape, b)),
        w_audio,
        w_visual,
        fused: column(tape, fused),
        pooling: cfg.pooling,
        modalities: cfg.modalities,
    };
    Ok(Graph {
        params: vars,
        logits,
        output,
    })
}

/// Inference-only forward pass.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    inputs: &SegmentInputs<T>,
    mode: Mode<'_>,
) -> Result<ForwardOutput<T>> {
    let mut tape = Tape::inference();
    Ok(forward_graph(&mut tape, params, cfg, inputs, mode)?.output)
}

/// Focal loss of the recorded logits against `label`.
pub fn focal_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var, label: u8, cfg: &ModelConfig) -> Result<Var> {
    let alpha = cfg.class_weights[usize::from(label)];
    tape.focal_loss(logits, usize::from(label), T::of(cfg.focal_gamma), T::of(alpha))
}

/// Loss value, per-parameter gradients and the forward output for one segment.
pub struct LossAndGrads<T> {
    pub loss: T,
    pub grads: ModelParams<T>,
    pub output: ForwardOutput<T>,
    pub guard_events: usize,
}

pub fn loss_and_grads<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    inputs: &SegmentInputs<T>,
    label: u8,
    mode: Mode<'_>,
) -> Result<LossAndGrads<T>> {
    let mut tape = Tape::new();
    let graph = forward_graph(&mut tape, params, cfg, inputs, mode)?;
    let loss = focal_loss(&mut tape, graph.logits, label, cfg)?;
    let mut grads = tape.backward(loss)?;
    let grads = graph.params.try_map(|name, &(id, _)| {
        grads
            .take(id)
            .ok_or_else(|| Error::contract(format!("no gradient for {name}")))
    })?;
    Ok(LossAndGrads {
        loss: tape.value(loss).as_slice()[0],
        grads,
        output: graph.output,
        guard_events: tape.guard_events(),
    })
}

/// Loss only, without recording a differentiable graph.
pub fn loss_only<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    inputs: &SegmentInputs<T>,
    label: u8,
) -> Result<(T, ForwardOutput<T>)> {
    let mut tape = Tape::inference();
    let graph = forward_graph(&mut tape, params, cfg, inputs, Mode::Eval)?;
    let loss = focal_loss(&mut tape, graph.logits, label, cfg)?;
    Ok((tape.value(loss).as_slice()[0], graph.output))
}
