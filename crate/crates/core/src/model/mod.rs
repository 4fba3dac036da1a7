//! The multimodal network: per-modality projection and temporal pooling, gated
//! fusion, a two-logit classifier and focal loss.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod gradcheck;
pub mod params;


pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{Fusion, Modalities, ModelConfig, Pooling, Variant};
pub use forward::{
    forward, forward_graph, loss_and_grads, loss_only, BranchOutput, ForwardOutput, LossAndGrads, Mode,
    SegmentInputs,
};
pub use gradcheck::{check_model_gradients, GradCheckSetup};
pub use params::{Branch, ModelParams, ParamTree};
