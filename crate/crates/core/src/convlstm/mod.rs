//! ConvLSTM base model: a stack of ConvLSTM layers over the spatial profile
//! followed by a linear dense head that emits the next profile.

mod cell;
mod stack;
mod train;

pub use cell::{cell_step, CellState, ConvLstmLayer};
pub use stack::{ConvLstmStack, DropoutMasks, StackConfig};
pub(crate) use train::strided;
pub use train::{train_single_step, EpochRecord, Sample, TrainConfig};

/// Gates per ConvLSTM unit: input, forget, candidate, output.
pub const GATES: usize = 4;
/// Spatial kernel width of every ConvLSTM convolution.
pub const KERNEL: usize = 3;
/// Profile length every record is resampled to.
pub const SPATIAL_POINTS: usize = 100;
/// Channel plan of the full-size model, input channel first.
pub const DEFAULT_CHANNELS: [usize; 5] = [1, 128, 64, 32, 8];
pub const DEFAULT_DROPOUT: f64 = 0.5;

/// Closed-form trainable parameter count of a stack with the given channel
/// plan (input channel first) over `spatial` points.
pub fn count_params_for_plan(channels: &[usize], spatial: usize) -> usize {
    let layers: usize = channels
        .windows(2)
        .map(|w| ConvLstmLayer::param_count(w[0], w[1]))
        .sum();
    let flat = spatial * channels.last().copied().unwrap_or(0);
    layers + crate::numcore::dense_param_count(flat, spatial)
}
