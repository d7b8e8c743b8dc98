//! Population training of small MLP classifiers with gradual magnitude
//! pruning and post-training quantization.

mod mlp;
mod prune;
mod quantize;
mod train;

pub use mlp::{predict_topk, DenseLayer, Gradients, Mlp};
pub use prune::{apply_magnitude_mask, pruned_count, sparsity_at_step, PruneSchedule};
pub use quantize::{
    quantize_int8_symmetric, quantize_model, round_to_f16, QuantKind, QuantizationScheme,
};
pub use train::{
    prediction_log, quantize_population, train_model, train_population, Population, TrainConfig,
};
