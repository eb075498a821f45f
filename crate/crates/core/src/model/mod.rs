//! Model assembly: configuration, parameter layout, the end-to-end forward
//! pass and checkpoint storage.

pub mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, storage_mib, Checkpoint, Precision};
pub use config::ModelConfig;
pub use forward::{forward_graph, ForwardOutput, Model, ShapeTrace};
pub use params::{DecoderParams, GruParams, HeadParams, ModelParams, SignalExtractorParams, SIGNALS};
