//! Synthetic drive cycles from a first-order equivalent-circuit cell.
//!
//! SOC is coulomb counted from the true current, terminal voltage is
//! `OCV(SOC) + I·R0 + V_rc` with a single RC polarization branch, and cell
//! temperature rises with the cumulative ohmic heat `Σ I²·R0·Δt`. Measurement
//! noise is added to the recorded current, voltage and temperature only.

use serde::{Deserialize, Serialize};

use super::record::DriveCycleRecord;
use crate::error::{Error, Result};
use crate::numeric::{Purpose, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "lowercase")]
pub enum ProfileStyle {
    /// Stop-and-go: short acceleration, cruise, regeneration and idle phases.
    Urban,
    /// Sustained discharge with slow load changes and no regeneration.
    Highway,
    /// A fixed current (negative discharges).
    Constant { current_a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub current_a: f64,
    pub voltage_v: f64,
    pub temperature_c: f64,
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig { current_a: 0.0, voltage_v: 0.0, temperature_c: 0.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub cycle_name: String,
    pub capacity_ah: f64,
    /// Piecewise-linear open-circuit voltage as (soc, volts), soc ascending.
    pub ocv_knots: Vec<(f64, f64)>,
    pub r0_ohm: f64,
    pub r1_ohm: f64,
    /// Time constant of the RC branch.
    pub rc_tau_s: f64,
    /// Temperature rise per joule of ohmic heat.
    pub heating_k_per_j: f64,
    pub profile: ProfileStyle,
    /// Average magnitude of the random profiles, in amperes.
    pub mean_current_a: f64,
    pub sample_period_s: f64,
    pub ambient_temp_c: f64,
    pub initial_soc: f64,
    pub cutoff_v: f64,
    pub max_duration_s: f64,
    pub noise: NoiseConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            cycle_name: "SYNTH".into(),
            capacity_ah: 4.93,
            ocv_knots: vec![(0.0, 2.5), (0.1, 3.35), (0.5, 3.65), (0.9, 4.0), (1.0, 4.2)],
            r0_ohm: 0.02,
            r1_ohm: 0.015,
            rc_tau_s: 20.0,
            heating_k_per_j: 0.003,
            profile: ProfileStyle::Urban,
            mean_current_a: 8.0,
            sample_period_s: 0.1,
            ambient_temp_c: 25.0,
            initial_soc: 1.0,
            cutoff_v: 2.5,
            max_duration_s: 6.0 * 3600.0,
            noise: NoiseConfig { current_a: 0.005, voltage_v: 0.001, temperature_c: 0.01 },
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.capacity_ah > 0.0) {
            bad.push(format!("capacity_ah must be positive, got {}", self.capacity_ah));
        }
        if !(self.sample_period_s > 0.0) {
            bad.push(format!("sample_period_s must be positive, got {}", self.sample_period_s));
        }
        if self.ocv_knots.len() < 2 || self.ocv_knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            bad.push("ocv_knots needs at least two points with strictly increasing soc".into());
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            bad.push(format!("initial_soc must lie in [0, 1], got {}", self.initial_soc));
        }
        if !(self.rc_tau_s > 0.0) || self.r0_ohm < 0.0 || self.r1_ohm < 0.0 {
            bad.push("resistances must be non-negative and rc_tau_s positive".into());
        }
        if !(self.max_duration_s > 0.0) {
            bad.push("max_duration_s must be positive".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(bad.join("; ")))
        }
    }

    /// Open-circuit voltage, linearly interpolated and held flat beyond the knots.
    pub fn ocv(&self, soc: f64) -> f64 {
        let k = &self.ocv_knots;
        if soc <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((s0, v0), (s1, v1)) = (w[0], w[1]);
            if soc <= s1 {
                return v0 + (v1 - v0) * (soc - s0) / (s1 - s0);
            }
        }
        k[k.len() - 1].1
    }
}

/// Piecewise-constant load phases smoothed by a first-order lag.
struct CurrentProfile {
    style: ProfileStyle,
    mean: f64,
    rng: Rng,
    level: f64,
    remaining_s: f64,
    smoothed: f64,
}

impl CurrentProfile {
    fn new(style: ProfileStyle, mean: f64, rng: Rng) -> Self {
        Self { style, mean: mean.abs(), rng, level: 0.0, remaining_s: 0.0, smoothed: 0.0 }
    }

    fn next(&mut self, dt: f64) -> f64 {
        let tau = match self.style {
            ProfileStyle::Constant { current_a } => return current_a,
            ProfileStyle::Urban => 0.5,
            ProfileStyle::Highway => 2.0,
        };
        if self.remaining_s <= 0.0 {
            let m = self.mean;
            let r = &mut self.rng;
            let (level, duration) = match self.style {
                ProfileStyle::Urban => {
                    let phase = r.uniform();
                    let level = if phase < 0.30 {
                        -m * r.uniform_in(1.5, 3.0)
                    } else if phase < 0.65 {
                        -m * r.uniform_in(0.5, 1.2)
                    } else if phase < 0.80 {
                        m * r.uniform_in(0.2, 0.8)
                    } else {
                        -m * 0.05
                    };
                    (level, r.uniform_in(2.0, 15.0))
                }
                _ => (-m * r.uniform_in(0.6, 1.4), r.uniform_in(10.0, 60.0)),
            };
            self.level = level;
            self.remaining_s = duration;
            if self.smoothed == 0.0 {
                self.smoothed = level;
            }
        }
        self.remaining_s -= dt;
        let a = (-dt / tau).exp();
        self.smoothed = a * self.smoothed + (1.0 - a) * self.level;
        self.smoothed
    }
}

/// Simulates one discharge until the terminal voltage drops below the cutoff,
/// SOC reaches 0, or the duration limit is hit. Identical `(cfg, seed)`
/// produce identical records.
pub fn synth_drive_cycle(cfg: &SynthConfig, seed: u64) -> Result<DriveCycleRecord> {
    cfg.validate()?;
    let dt = cfg.sample_period_s;
    let mut profile = CurrentProfile::new(cfg.profile, cfg.mean_current_a, Rng::stream(seed, Purpose::Data));
    let mut noise = Rng::stream(seed, Purpose::Noise);
    let rc_decay = (-dt / cfg.rc_tau_s).exp();
    let coulombs_full = 3600.0 * cfg.capacity_ah;
    let max_steps = (cfg.max_duration_s / dt).ceil() as usize;

    let mut rec = DriveCycleRecord {
        cycle_name: cfg.cycle_name.clone(),
        ambient_temp_c: cfg.ambient_temp_c,
        sample_period_s: dt,
        time_s: Vec::new(),
        current_a: Vec::new(),
        voltage_v: Vec::new(),
        temperature_c: Vec::new(),
        soc: Vec::new(),
    };

    let mut soc = cfg.initial_soc;
    let mut v_rc = 0.0;
    let mut heat_j = 0.0;
    for k in 0..=max_steps {
        let current = profile.next(dt);
        let voltage = cfg.ocv(soc) + current * cfg.r0_ohm + v_rc;
        let temperature = cfg.ambient_temp_c + cfg.heating_k_per_j * heat_j;

        rec.time_s.push(k as f64 * dt);
        rec.current_a.push(current + cfg.noise.current_a * noise.normal());
        rec.voltage_v.push(voltage + cfg.noise.voltage_v * noise.normal());
        rec.temperature_c.push(temperature + cfg.noise.temperature_c * noise.normal());
        rec.soc.push(soc);

        if voltage < cfg.cutoff_v || soc <= 0.0 {
            break;
        }
        soc = (soc + current * dt / coulombs_full).clamp(0.0, 1.0);
        v_rc = rc_decay * v_rc + cfg.r1_ohm * (1.0 - rc_decay) * current;
        heat_j += current * current * cfg.r0_ohm * dt;
    }
    Ok(rec)
}
