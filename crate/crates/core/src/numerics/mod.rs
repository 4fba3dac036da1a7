//! Dense matrices, reverse-mode differentiation and a finite-difference gradient oracle.

pub mod gradcheck;
pub mod matrix;
pub mod scalar;
pub mod tape;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport, ParamCheck};
pub use matrix::Matrix;
pub use scalar::Scalar;
pub use tape::{softmax, Axis, Gradients, Tape, Var};
