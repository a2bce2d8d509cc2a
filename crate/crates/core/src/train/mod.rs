//! Backward rules, losses, SGD, gradient checking and the training loop.

pub mod backprop;
pub mod fit;
pub mod gradcheck;
pub mod loss;
pub mod sgd;

pub use fit::{evaluate, fit, EpochMetrics, Evaluation, TrainConfig};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use loss::{loss_crossentropy_magnitude, loss_mse_real, LossKind};
pub use sgd::sgd_step;
