//! Telemetry ingestion, train-only min-max scaling, sliding windows, cycle
//! partitioning and a synthetic equivalent-circuit cycle generator.

mod record;
mod scaler;
mod split;
mod synth;
mod window;

pub use record::{
    load_drive_cycle, load_drive_cycle_file, CycleMeta, DriveCycleRecord, CSV_HEADER, DEFAULT_SAMPLE_PERIOD_S,
    SOC_TOLERANCE,
};
pub use scaler::{apply_scaler, fit_scaler, ChannelRange, ScaledRecord, ScalerParams};
pub use split::{split_cycles, DataManifest, ManifestEntry, Split, SplitCatalog, SplitRecords, MANIFEST_FILE};
pub use synth::{synth_drive_cycle, NoiseConfig, ProfileStyle, SynthConfig};
pub use window::{make_windows, WindowDataset, WindowSample};
