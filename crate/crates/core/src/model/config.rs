use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters. Defaults: a 20 s window at 10 Hz, five
/// chunks, width 128, ten harmonics, scalar tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Window length L in samples.
    pub window_len: usize,
    /// Number of chunks N; must divide `window_len`.
    pub chunks: usize,
    /// Input channels C (current, voltage, temperature).
    pub channels: usize,
    /// Hidden width d shared by pooling, coefficient network, GRU and cell.
    pub hidden: usize,
    /// Fourier harmonics K; coefficient vectors have 1 + 2K entries.
    pub harmonics: usize,
    /// Token length H produced by the seasonality basis.
    pub token_len: usize,
    /// Dropout probability in the output head.
    pub dropout: f64,
    /// Causal cosine attention temperature.
    pub temperature: f64,
    /// Seed of the initialization stream.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window_len: 200,
            chunks: 5,
            channels: 3,
            hidden: 128,
            harmonics: 10,
            token_len: 1,
            dropout: 0.2,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn chunk_len(&self) -> usize {
        self.window_len / self.chunks
    }

    /// K_θ = 1 + 2K.
    pub fn theta_len(&self) -> usize {
        1 + 2 * self.harmonics
    }

    /// Length of the encoder's token sequence, N·H.
    pub fn seq_len(&self) -> usize {
        self.chunks * self.token_len
    }

    /// Reports every violated constraint at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [
            ("window_len", self.window_len),
            ("chunks", self.chunks),
            ("hidden", self.hidden),
            ("harmonics", self.harmonics),
            ("token_len", self.token_len),
        ] {
            if v == 0 {
                bad.push(format!("{name} must be at least 1"));
            }
        }
        if self.chunks > 0 && self.window_len % self.chunks != 0 {
            bad.push(format!("chunks ({}) must divide window_len ({})", self.chunks, self.window_len));
        }
        if self.channels != 3 {
            bad.push(format!("channels must be 3 (current, voltage, temperature), got {}", self.channels));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bad.push(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            bad.push(format!("temperature must be positive, got {}", self.temperature));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    /// Closed-form count of learnable scalars:
    /// `3·[2d + (d+1) + (d²+d) + (d·Kθ+Kθ)] + 2·[3dC + 3d² + 6d] + 2d + (d+1)`.
    pub fn param_count_formula(&self) -> usize {
        let (d, c, kt) = (self.hidden, self.channels, self.theta_len());
        3 * (2 * d + (d + 1) + (d * d + d) + (d * kt + kt)) + 2 * (3 * d * c + 3 * d * d + 6 * d) + 2 * d + (d + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.chunk_len(), 40);
        assert_eq!(c.theta_len(), 21);
        assert_eq!(c.param_count_formula(), 161_347);
    }

    #[test]
    fn lists_every_violation() {
        let c = ModelConfig { window_len: 201, hidden: 0, dropout: 1.0, temperature: 0.0, ..Default::default() };
        let Err(Error::Config(v)) = c.validate() else { panic!("expected config error") };
        assert_eq!(v.len(), 4, "{v:?}");
    }
}
