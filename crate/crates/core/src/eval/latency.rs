use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::numeric::{Matrix, Mode, Purpose, Rng};

pub const MIN_TRIALS: usize = 100;
pub const MIN_WARMUP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub mean_ms: f64,
    /// Inferences per second, `1000 / mean_ms`.
    pub throughput: f64,
    pub trials: usize,
    pub warmup: usize,
    pub hardware: String,
}

impl LatencyReport {
    /// Summarizes raw per-trial timings (warmup already excluded).
    pub fn from_samples(samples_ms: &[f64], warmup: usize, hardware: impl Into<String>) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::InsufficientData("no latency samples".into()));
        }
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = samples_ms.iter().sum::<f64>() / samples_ms.len() as f64;
        Ok(Self {
            p50_ms: nearest_rank(&sorted, 50.0),
            p90_ms: nearest_rank(&sorted, 90.0),
            mean_ms: mean,
            throughput: 1000.0 / mean,
            trials: samples_ms.len(),
            warmup,
            hardware: hardware.into(),
        })
    }
}

/// Nearest-rank percentile of an ascending slice: the value at rank ⌈p·n/100⌉.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn hardware_note() -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{}-{}, {cores} logical cores, timed single-threaded", std::env::consts::ARCH, std::env::consts::OS)
}

/// Times `trials` single-window eval-mode forwards on the calling thread
/// after `warmup` untimed ones.
pub fn benchmark_latency(model: &Model, trials: usize, warmup: usize) -> Result<LatencyReport> {
    if trials < MIN_TRIALS || warmup < MIN_WARMUP {
        return Err(Error::Parameter(format!(
            "benchmark needs at least {MIN_TRIALS} trials and {MIN_WARMUP} warmup runs, got {trials} and {warmup}"
        )));
    }
    let cfg = model.config();
    let mut rng = Rng::stream(cfg.seed, Purpose::Custom(0xbe7c));
    let data = (0..cfg.window_len * cfg.channels).map(|_| rng.uniform()).collect();
    let window = Matrix::from_vec(cfg.window_len, cfg.channels, data)?;
    let mut sink = 0.0;
    for _ in 0..warmup {
        sink += model.forward(&window, Mode::Eval, &mut rng)?;
    }
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let t0 = Instant::now();
        sink += model.forward(&window, Mode::Eval, &mut rng)?;
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    std::hint::black_box(sink);
    LatencyReport::from_samples(&samples, warmup, hardware_note())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn constant_latency() {
        let r = LatencyReport::from_samples(&[0.3; 100], 10, "test").unwrap();
        assert_eq!((r.p50_ms, r.p90_ms), (0.3, 0.3));
        assert!((r.mean_ms - 0.3).abs() < 1e-15);
        assert!((r.throughput - 1000.0 / 0.3).abs() < 1e-9);
    }

    #[test]
    fn nearest_rank_values() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 50.0), 5.0);
        assert_eq!(nearest_rank(&v, 90.0), 9.0);
        assert_eq!(nearest_rank(&v, 91.0), 10.0);
        assert_eq!(nearest_rank(&v, 0.0), 1.0);
        assert_eq!(nearest_rank(&[7.0], 90.0), 7.0);
    }

    #[test]
    fn ordering_and_preconditions() {
        let m = Model::new(ModelConfig { hidden: 8, harmonics: 2, ..Default::default() }).unwrap();
        assert!(benchmark_latency(&m, 99, 10).is_err());
        assert!(benchmark_latency(&m, 100, 9).is_err());
        let r = benchmark_latency(&m, 100, 10).unwrap();
        assert!(r.p50_ms <= r.p90_ms && r.mean_ms > 0.0);
        assert_eq!((r.trials, r.warmup), (100, 10));
    }
}
