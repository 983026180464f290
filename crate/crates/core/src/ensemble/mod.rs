//! Stacking ensemble: a meta-learner over the base models' rollouts.

mod meta;
mod stacking;

pub use meta::{
    count_meta_params, train_meta, MetaConfig, MetaNet, MetaTrainConfig, StackingSample,
    DEFAULT_LEAKY_SLOPE, DEFAULT_META_PLAN, META_INPUTS,
};
pub use stacking::{build_stacking_dataset, ensemble_predict, StackingSequence};
