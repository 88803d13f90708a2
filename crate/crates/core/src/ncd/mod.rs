//! Neural cognitive diagnosis.
//!
//! Abilities and difficulties live in a space with one dimension per
//! knowledge point. For student `s` and item `q` the interaction feature is
//!
//! ```text
//! x = softplus(alpha_raw[q]) * mask(q) ∘ (σ(θ_s) − σ(β_q))
//! ```
//!
//! where `mask(q)` keeps the knowledge points the item covers. A sigmoid MLP
//! with non-negative weights maps `x` to a logit, so the predicted
//! probability of a correct answer is monotone in every covered mastery
//! value `σ(θ_s[k])`.

mod gradcheck;
mod grads;
mod metrics;
mod model;
mod optim;
mod train;

pub use gradcheck::{grad_check, grad_check_with, GRAD_CHECK_FLOOR};
pub(crate) use grads::dloss_dlogit;
pub use grads::{batch_gradients, Gradients};
pub use metrics::{auc, bce_loss, evaluate, metrics_from_predictions, Metrics, LOSS_EPS};
pub use model::{
    mastery_table, sigmoid, softplus, DenseLayer, Dims, MasteryTable, Matrix, NcdModel, Trace,
};
pub use optim::Optimizer;
pub use train::{fit, train_epoch, EpochRecord, TrainConfig};
