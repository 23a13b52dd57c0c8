//! Dense numeric kernel with hand-derived gradients.
//!
//! Layers keep their parameters in plain row-major `f64` buffers. Every
//! forward function has a matching backward that *accumulates* into a
//! gradient value of the same parameter type, so per-sample gradients can be
//! summed without intermediate allocation.

pub mod gradcheck;
pub mod gru;
pub mod init;
pub mod linear;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod params;

pub use gradcheck::{grad_check, GradCheckReport};
pub use gru::{bigru_encode, GruDirection, GruParams};
pub use linear::{linear_apply, LinearParams};
pub use matrix::Matrix;
pub use mlp::{mlp_apply, Activation, MlpParams};
pub use optim::{adamw_step, clip_global_norm, AdamWConfig, OptimizerState};
pub use params::{Params, TensorRef};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) >= 0.0);
        for &x in &[0.1, 1.0, 7.5, 30.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
