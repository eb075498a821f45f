//! Error metrics, per-cycle evaluation with trace export, and the latency
//! benchmark.

mod latency;
mod metrics;
mod trace;

pub use latency::{benchmark_latency, hardware_note, nearest_rank, LatencyReport};
pub use metrics::{compute_metrics, Metrics, MetricsReport};
pub use trace::{evaluate_cycle, evaluate_scaled, export_trace, read_trace, PredictionTrace, TracePoint, TRACE_HEADER};
