//! Skew Jensen-Shannon entropy regularization for classifiers.
//!
//! The crate is organised bottom-up:
//!
//! - [`prob`]: entropy, cross-entropy, KL, JSD and the scaled skew divergence
//!   `J^s_α(p‖q)` over finite distributions.
//! - [`losses`]: cross-entropy, focal loss, label smoothing, maximum-entropy
//!   learning and the skew-JS regularized objective, each with an analytical
//!   gradient with respect to the logits.
//! - [`model`]: a small ReLU MLP trained with minibatch momentum SGD or an
//!   RMSProp-style rule.
//! - [`data`]: synthetic fine-grained data, CSV I/O, normalization and
//!   stratified splitting.
//! - [`eval`]: confusion matrices, F1, prediction-entropy statistics and a
//!   power-iteration PCA.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below are what the experiment runner uses.

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod prob;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use data::{Dataset, FoldSplit, GenSpec, NormStats};
pub use eval::{ConfusionMatrix, Metrics, Projection2D};
pub use losses::{Logits, LossKind, LossSpec};
pub use model::{MlpModel, Optimizer, TrainConfig, TrainReport};
pub use prob::{ProbVector, SkewParam};

pub type ProbVector64 = ProbVector<f64>;
pub type ProbVector32 = ProbVector<f32>;
pub type SkewParam64 = SkewParam<f64>;
pub type Logits64 = Logits<f64>;
pub type LossSpec64 = LossSpec<f64>;
pub type Mlp64 = MlpModel<f64>;
pub type Mlp32 = MlpModel<f32>;
pub type TrainConfig64 = TrainConfig<f64>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type GenSpec64 = GenSpec<f64>;
pub type Metrics64 = Metrics<f64>;
pub type Projection64 = Projection2D<f64>;
