//! Graph attention networks whose edge scores see pairwise node relations,
//! plus the tooling to measure over-smoothing as depth grows.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`autodiff`]: dense `f64` tensors and a reverse-mode tape,
//!   including the edge-segment operations used for sparse attention.
//! - [`dataset`]: the on-disk graph format, symmetrisation, splits and the
//!   missing-feature protocol.
//! - [`model`]: the relational attention layer, PairNorm and the stacked forward pass.
//! - [`training`]: masked cross-entropy, Adam and the per-seed training run.
//! - [`metrics`]: accuracy, row-diff, col-diff, group distance ratio and
//!   instance information gain.
//! - [`harness`]: sweeps, JSONL records, summaries and checkpoints.

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod relation;
pub mod tensor;
pub mod training;

pub use autodiff::{Gradients, Tape, Var};
pub use dataset::{EdgeIndex, GraphDataset, MissingSpec};
pub use error::{Error, Result};
pub use model::{GatModel, LayerParams, ModelConfig, Normalization};
pub use relation::RelationKind;
pub use tensor::Tensor;
pub use training::{RunResult, TrainConfig};
