//! Training objectives: the hard enhancement loss, soft distillation losses
//! on intermediate taps and the method table that chooses between them.

mod gram;
mod hard;
mod kd;
mod tap;

pub use gram::{gram, soft_loss_selfsim, soft_loss_selfsim_grad, GramBlocking, GramMatrix, GramOptions};
pub use hard::{
    combined_loss, hard_loss, hard_loss_grad, masked_hard_loss, soft_loss_direct,
    soft_loss_direct_grad, LossWeights,
};
pub use kd::{kd_soft_loss, soft_loss_multi, soft_loss_multi_grad, Fusion, KdMethod, Layer, SoftLossOutput};
pub use tap::TapGrid;

/// `d|x|/dx` with zero at the kink.
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
