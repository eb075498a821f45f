//! Short-window state-of-charge estimation for lithium-ion cells.
//!
//! A window of the most recent current, voltage and temperature samples is cut
//! into chunks, each chunk is compressed into one token per signal by attention
//! pooling and a fixed Fourier basis, the token sequence is encoded by a GRU
//! with causal cosine attention, and the resulting context is updated with the
//! newest measurement before a normalized sigmoid head emits the SOC.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod numeric;
pub mod train;

pub use error::{CheckpointError, DataError, Error, Result};
pub use eval::{Metrics, MetricsReport};
pub use model::{Checkpoint, Model, ModelConfig, ModelParams};
pub use numeric::{Graph, Matrix, Mode, Rng, Var};
pub use train::{TrainConfig, TrainHistory};
