//! Reverse-mode differentiation over dense and sparse matrix primitives,
//! plus the Adam optimizer used by every training loop.

mod adam;
mod gradcheck;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use tape::{
    log_sigmoid, row_log_softmax, row_softmax, sigmoid, Gradients, Tape, Var, L2_NORM_EPS,
    LAYER_NORM_EPS,
};
