//! Fully connected layers, pooling, activations and normalization.

pub mod activation;
pub mod fc;
pub mod norm;
pub mod pool;
pub mod spectral;

pub use activation::{act_rerelu, act_split, SplitFn};
pub use fc::{fc_classic, fc_geometric, FcMode, FcParams};
pub use norm::{bn_rqbn, bn_vqbn, bn_wqbn, BnKind, BnState, Mode};
pub use pool::{pool_fully_magnitude, pool_split_avg, pool_split_max, Pool2d, PoolKind};
pub use spectral::{spectral_normalize, SpectralState};
