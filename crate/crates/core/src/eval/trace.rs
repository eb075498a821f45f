use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Metrics};
use crate::data::{apply_scaler, make_windows, DriveCycleRecord, ScaledRecord, ScalerParams};
use crate::error::{Error, Result};
use crate::model::Model;

pub const TRACE_HEADER: [&str; 4] = ["t_s", "soc_true", "soc_pred", "error"];

/// Windows per forward batch during evaluation.
const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t_s: f64,
    pub soc_true: f64,
    pub soc_pred: f64,
    /// `soc_pred − soc_true`.
    pub error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionTrace {
    pub cycle_name: String,
    pub points: Vec<TracePoint>,
}

impl PredictionTrace {
    pub fn predictions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.soc_pred).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.soc_true).collect()
    }
}

/// Stride-1 evaluation of an already scaled cycle: one prediction per full
/// window, the first at `t = (L−1)·Δt`.
pub fn evaluate_scaled(model: &Model, record: &ScaledRecord) -> Result<(PredictionTrace, Metrics)> {
    let l = model.config().window_len;
    let windows = make_windows(record, l, 1).map_err(|e| match e {
        Error::InsufficientData(m) => Error::InsufficientData(format!("{}: {m}", record.cycle_name)),
        other => other,
    })?;
    let rows: Vec<&[f64]> = windows.iter().map(|w| w.rows()).collect();
    let preds = model.predict_many(&rows, EVAL_BATCH)?;
    let points: Vec<TracePoint> = windows
        .iter()
        .zip(&preds)
        .map(|(w, &p)| {
            let t = w.target_soc();
            TracePoint { t_s: w.end() as f64 / record.sample_period_s.recip(), soc_true: t, soc_pred: p, error: p - t }
        })
        .collect();
    let trace = PredictionTrace { cycle_name: record.cycle_name.clone(), points };
    let metrics = compute_metrics(&trace.predictions(), &trace.targets())?;
    Ok((trace, metrics))
}

/// Scales `record` with the training scaler and evaluates it.
pub fn evaluate_cycle(model: &Model, record: &DriveCycleRecord, scaler: &ScalerParams) -> Result<(PredictionTrace, Metrics)> {
    evaluate_scaled(model, &apply_scaler(record, scaler))
}

/// Writes `t_s,soc_true,soc_pred,error` with shortest round-trip decimals.
pub fn export_trace(trace: &PredictionTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(TRACE_HEADER).map_err(io)?;
    for p in &trace.points {
        w.write_record([p.t_s, p.soc_true, p.soc_pred, p.error].map(|v| v.to_string())).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TracePoint>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<TracePoint>, _>>()
        .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string())))
}
