use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::record::DriveCycleRecord;
use crate::error::DataError;
use crate::numeric::Matrix;

/// Observed extrema of one input channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub min: f64,
    pub max: f64,
}

impl ChannelRange {
    #[inline]
    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }
}

/// Min-max scaling fitted on training cycles only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub current: ChannelRange,
    pub voltage: ChannelRange,
    pub temperature: ChannelRange,
    /// Names of the cycles the extrema came from.
    pub fitted_on: Vec<String>,
}

impl ScalerParams {
    pub fn channels(&self) -> [ChannelRange; 3] {
        [self.current, self.voltage, self.temperature]
    }

    #[inline]
    pub fn scale_sample(&self, sample: [f64; 3]) -> [f64; 3] {
        [
            self.current.scale(sample[0]),
            self.voltage.scale(sample[1]),
            self.temperature.scale(sample[2]),
        ]
    }

    /// Hex SHA-256 over the bit patterns of the six extrema.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for c in self.channels() {
            h.update(c.min.to_le_bytes());
            h.update(c.max.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Global per-channel extrema over every sample of the given training cycles.
pub fn fit_scaler(train: &[DriveCycleRecord]) -> Result<ScalerParams, DataError> {
    if train.iter().all(|r| r.is_empty()) {
        return Err(DataError::Split("cannot fit a scaler without training samples".into()));
    }
    let range = |series: &dyn Fn(&DriveCycleRecord) -> &[f64]| {
        let mut r = ChannelRange { min: f64::INFINITY, max: f64::NEG_INFINITY };
        for rec in train {
            for &v in series(rec) {
                r.min = r.min.min(v);
                r.max = r.max.max(v);
            }
        }
        r
    };
    let current = range(&|r| &r.current_a);
    let voltage = range(&|r| &r.voltage_v);
    let temperature = range(&|r| &r.temperature_c);
    for (channel, r) in [("current_a", current), ("voltage_v", voltage), ("temperature_c", temperature)] {
        if !(r.max > r.min) {
            return Err(DataError::DegenerateChannel { channel, value: r.min });
        }
    }
    Ok(ScalerParams {
        current,
        voltage,
        temperature,
        fitted_on: train.iter().map(|r| r.cycle_name.clone()).collect(),
    })
}

/// A cycle after scaling: a T×3 feature matrix in (I, V, T) column order plus
/// the untouched SOC target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledRecord {
    pub cycle_name: String,
    pub ambient_temp_c: f64,
    pub sample_period_s: f64,
    pub features: Matrix,
    pub soc: Vec<f64>,
}

impl ScaledRecord {
    pub fn len(&self) -> usize {
        self.soc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.soc.is_empty()
    }
}

/// Applies `x' = (x − min) / (max − min)` per channel. Values outside the
/// training range map outside [0, 1] and are kept as is.
pub fn apply_scaler(record: &DriveCycleRecord, scaler: &ScalerParams) -> ScaledRecord {
    let mut data = Vec::with_capacity(record.len() * 3);
    for i in 0..record.len() {
        data.extend_from_slice(&scaler.scale_sample(record.sample(i)));
    }
    ScaledRecord {
        cycle_name: record.cycle_name.clone(),
        ambient_temp_c: record.ambient_temp_c,
        sample_period_s: record.sample_period_s,
        features: Matrix::from_vec(record.len(), 3, data).expect("length matches"),
        soc: record.soc.clone(),
    }
}
