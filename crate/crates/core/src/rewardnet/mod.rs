//! The learned reward function.
//!
//! Both clouds pass through the same stack of dynamic-graph edge
//! convolutions, then through one cross-attention block applied in both
//! directions with shared weights:
//!
//! ```text
//! Φ_src = F_src + φ(F_src, F_tgt)      Φ_tgt = F_tgt + φ(F_tgt, F_src)
//! φ(a, b) = FF(LayerNorm(a + MultiHead(a, b)))
//! ```
//!
//! Each side is max-pooled over points; the two pooled vectors are
//! concatenated (or subtracted) and fed to a shared MLP, then to one head
//! with the 12 rotation rewards and one with the 12 translation rewards.
//! Gradients are derived by hand and checked against finite differences.

mod config;
mod layers;
mod model;
mod params;
mod train;
mod weights;

pub use config::{CurriculumMode, Fusion, NetConfig, RangeSpec, TrainConfig};
pub use layers::{
    attention_forward, cross_attention, edgeconv_forward, knn_graph, layernorm_forward,
    AttentionWeights, LAYER_NORM_EPS,
};
pub use model::{backward, batch_loss, data_loss, loss, RewardNet, Sample};
pub use params::{Block, Gradients, Layout, NetworkParameters};
pub use train::{
    draw_sample, sgd_step, train, train_with_progress, training_target, validate, validation_set,
    EpochRecord, NetworkRewardSource, TrainHistory,
};
pub use weights::{
    load_weights, read_weights, save_weights, write_weights, WeightsFile, FORMAT_VERSION, MAGIC,
};
