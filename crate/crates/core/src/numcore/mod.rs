//! Numeric kernels with analytic gradients.
//!
//! Everything here is 64-bit and single-threaded. The slice-level kernels in
//! [`conv`] and [`dense`] are what the models call in their inner loops; the
//! [`Tensor`]-level wrappers validate shapes and finiteness for callers that
//! want the checked form.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod fdiff;
pub mod loss;
pub mod tensor;

pub use activation::{activation, activation_grad, Activation};
pub use adam::{adam_update, AdamConfig, AdamState};
pub use conv::{conv1d_same, conv1d_same_grad, ConvGrads};
pub use dense::{dense_forward, dense_grad, dense_param_count, DenseGrads};
pub use dropout::dropout;
pub use fdiff::{finite_difference_grad, max_relative_error};
pub use loss::{mse, mse_grad};
pub use tensor::Tensor;

/// Glorot/Xavier uniform limit.
pub(crate) fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
