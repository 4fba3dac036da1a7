use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! choice_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let t = s.trim().replace('-', "_");
                $(if t.eq_ignore_ascii_case($text) {
                    return Ok($name::$variant);
                })+
                Err(Error::config(format!(
                    "unknown {} {:?} (expected one of {})",
                    stringify!($name).to_lowercase(),
                    s,
                    [$($text),+].join(", ")
                )))
            }
        }
    };
}

choice_enum!(
    /// Temporal aggregation of a projected sequence.
    Pooling {
        SoftmaxTanh => "softmax_tanh",
        SoftmaxNoTanh => "softmax_no_tanh",
        Mean => "mean",
        Max => "max",
    }
);

choice_enum!(
    /// How the two pooled modality vectors are combined.
    Fusion {
        SoftmaxGate => "softmax_gate",
        SigmoidGate => "sigmoid_gate",
        Concat => "concat",
    }
);

choice_enum!(Modalities {
    Both => "both",
    AudioOnly => "audio_only",
    VisualOnly => "visual_only",
});

choice_enum!(
    /// Named ablations of the full model.
    Variant {
        Full => "full",
        NoTanh => "no_tanh",
        MeanPool => "mean_pool",
        MaxPool => "max_pool",
        Concat => "concat",
        SigmoidGate => "sigmoid_gate",
        AudioOnly => "audio_only",
        VisualOnly => "visual_only",
        NoProjectionActivation => "no_projection_activation",
    }
);

impl Pooling {
    /// Whether this mode yields an informative attention distribution.
    pub fn has_attention(self) -> bool {
        matches!(self, Pooling::SoftmaxTanh | Pooling::SoftmaxNoTanh)
    }

    pub fn has_scorer(self) -> bool {
        self.has_attention()
    }
}

impl Modalities {
    pub fn uses_audio(self) -> bool {
        self != Modalities::VisualOnly
    }

    pub fn uses_visual(self) -> bool {
        self != Modalities::AudioOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_audio: usize,
    pub d_visual: usize,
    pub hidden: usize,
    pub dropout_p: f64,
    pub pooling: Pooling,
    pub fusion: Fusion,
    pub modalities: Modalities,
    /// LayerNorm + ReLU after the projection.
    pub projection_activation: bool,
    pub focal_gamma: f64,
    /// Focal-loss weight per class, `[negative, positive]`.
    pub class_weights: [f64; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_audio: 1024,
            d_visual: 768,
            hidden: 1024,
            dropout_p: 0.5,
            pooling: Pooling::SoftmaxTanh,
            fusion: Fusion::SoftmaxGate,
            modalities: Modalities::Both,
            projection_activation: true,
            focal_gamma: 2.0,
            class_weights: [1.0, 1.0],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        if self.hidden == 0 || self.d_audio == 0 || self.d_visual == 0 {
            return Err(Error::config("feature and hidden dimensions must be positive"));
        }
        if !self.class_weights.iter().all(|&w| w > 0.0 && w.is_finite()) {
            return Err(Error::config(format!("class weights {:?} must be positive", self.class_weights)));
        }
        if !(self.focal_gamma >= 0.0 && self.focal_gamma.is_finite()) {
            return Err(Error::config(format!("focal gamma {} must be >= 0", self.focal_gamma)));
        }
        Ok(())
    }

    /// True when both modalities are fused through a learned gate.
    pub fn has_gate(&self) -> bool {
        self.modalities == Modalities::Both && self.fusion != Fusion::Concat
    }

    pub fn fused_dim(&self) -> usize {
        if self.modalities == Modalities::Both && self.fusion == Fusion::Concat {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        match variant {
            Variant::Full => {}
            Variant::NoTanh => self.pooling = Pooling::SoftmaxNoTanh,
            Variant::MeanPool => self.pooling = Pooling::Mean,
            Variant::MaxPool => self.pooling = Pooling::Max,
            Variant::Concat => self.fusion = Fusion::Concat,
            Variant::SigmoidGate => self.fusion = Fusion::SigmoidGate,
            Variant::AudioOnly => self.modalities = Modalities::AudioOnly,
            Variant::VisualOnly => self.modalities = Modalities::VisualOnly,
            Variant::NoProjectionActivation => self.projection_activation = false,
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_choices() {
        assert_eq!("mean".parse::<Pooling>().unwrap(), Pooling::Mean);
        assert_eq!("audio-only".parse::<Modalities>().unwrap(), Modalities::AudioOnly);
        assert!("median".parse::<Pooling>().is_err());
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), *v);
        }
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig {
            dropout_p: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            class_weights: [1.0, 0.0],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fused_dims() {
        let c = ModelConfig::default();
        assert_eq!(c.fused_dim(), 1024);
        assert_eq!(c.clone().with_variant(Variant::Concat).fused_dim(), 2048);
        assert!(!c.clone().with_variant(Variant::AudioOnly).has_gate());
    }
}
