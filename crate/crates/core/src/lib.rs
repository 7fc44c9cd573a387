//! Training-time synaptic pruning for time-series forecasters.
//!
//! The crate bundles everything needed to train small recurrent and
//! patch-transformer forecasters while permanently removing the
//! lowest-magnitude weights on a cubic sparsity schedule, and to compare
//! that regularizer against dropout baselines:
//!
//! - [`tensor`]: reverse-mode autodiff engine and optimizers.
//! - [`models`]: RNN, LSTM and PatchTST-lite forecasters.
//! - [`pruning`]: masks, schedule, global magnitude selection, statistics.
//! - [`regularizers`]: dropout and Monte Carlo dropout baselines.
//! - [`data`]: CSV ingestion, scaling, windowing, synthetic series.
//! - [`experiment`]: seeded trial runner, results CSV, statistics, reports.

pub mod data;
pub mod error;
pub mod experiment;
pub mod models;
pub mod pruning;
pub mod regularizers;
pub mod tensor;

pub use error::{Error, Result};
pub use models::{build_model, Model, ModelConfig, ModelKind, PrunableScope};
pub use pruning::{PruningState, ScheduleConfig, SparsityReport, TiePolicy};
pub use regularizers::{Method, RegularizerSpec};
pub use tensor::{Graph, OptimizerKind, Real, Tensor, Var};
