//! Learnable tensors, grouped by module.
//!
//! Every group is generic over the leaf type so the same layout holds weights
//! (`Matrix`), their graph handles (`Var`), gradients and optimizer moments.
//! Linear weights are stored `out×in` and applied as `x·Wᵀ + b`.

use crate::numeric::{Matrix, Purpose, Rng};

use super::config::ModelConfig;

macro_rules! tensor_group {
    ($(#[$m:meta])* pub struct $name:ident { $($(#[$fm:meta])* $field:ident,)* }) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name<T = Matrix> {
            $($(#[$fm])* pub $field: T,)*
        }

        impl<T> $name<T> {
            pub fn map<U>(&self, prefix: &str, f: &mut impl FnMut(&str, &T) -> U) -> $name<U> {
                $name { $($field: f(&format!("{prefix}.{}", stringify!($field)), &self.$field),)* }
            }

            pub fn for_each<'a>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T)) {
                $(f(&format!("{prefix}.{}", stringify!($field)), &self.$field);)*
            }

            pub fn for_each_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(&str, &'a mut T)) {
                $(f(&format!("{prefix}.{}", stringify!($field)), &mut self.$field);)*
            }
        }
    };
}

tensor_group! {
    /// Attention pooling and coefficient network for one signal.
    pub struct SignalExtractorParams {
        /// d×1: lifts each scalar sample to width d.
        pool_proj_weight,
        pool_proj_bias,
        /// 1×d: one attention score per time step.
        pool_score_weight,
        pool_score_bias,
        /// d×d first layer of the coefficient network.
        theta_hidden_weight,
        theta_hidden_bias,
        /// Kθ×d second layer.
        theta_out_weight,
        theta_out_bias,
    }
}

tensor_group! {
    /// Gated recurrent unit with gates stacked as (reset, update, candidate)
    /// row blocks. The hidden-side candidate bias sits inside the reset-gated
    /// term: `h̃ = tanh(W_h x + b_ih + r ⊙ (U_h h + b_hh))`.
    pub struct GruParams {
        /// 3d×C
        input_weight,
        /// 3d×d
        hidden_weight,
        /// 1×3d
        input_bias,
        /// 1×3d
        hidden_bias,
    }
}

tensor_group! {
    /// Layer norm followed by the scalar output projection.
    pub struct HeadParams {
        norm_gain,
        norm_bias,
        out_weight,
        out_bias,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<T = Matrix> {
    pub cell: GruParams<T>,
    pub head: HeadParams<T>,
}

/// Signal order of the three extractors.
pub const SIGNALS: [&str; 3] = ["current", "voltage", "temperature"];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Matrix> {
    /// Indexed in (current, voltage, temperature) order.
    pub extractors: [SignalExtractorParams<T>; 3],
    pub encoder: GruParams<T>,
    pub decoder: DecoderParams<T>,
}

impl<T> ModelParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&str, &T) -> U) -> ModelParams<U> {
        ModelParams {
            extractors: [
                self.extractors[0].map("extractor.current", f),
                self.extractors[1].map("extractor.voltage", f),
                self.extractors[2].map("extractor.temperature", f),
            ],
            encoder: self.encoder.map("encoder.gru", f),
            decoder: DecoderParams {
                cell: self.decoder.cell.map("decoder.cell", f),
                head: self.decoder.head.map("decoder.head", f),
            },
        }
    }

    /// Visits tensors in a fixed canonical order.
    pub fn for_each<'a>(&'a self, f: &mut impl FnMut(&str, &'a T)) {
        for (p, name) in self.extractors.iter().zip(SIGNALS) {
            p.for_each(&format!("extractor.{name}"), f);
        }
        self.encoder.for_each("encoder.gru", f);
        self.decoder.cell.for_each("decoder.cell", f);
        self.decoder.head.for_each("decoder.head", f);
    }

    pub fn for_each_mut<'a>(&'a mut self, f: &mut impl FnMut(&str, &'a mut T)) {
        for (p, name) in self.extractors.iter_mut().zip(SIGNALS) {
            p.for_each_mut(&format!("extractor.{name}"), f);
        }
        self.encoder.for_each_mut("encoder.gru", f);
        self.decoder.cell.for_each_mut("decoder.cell", f);
        self.decoder.head.for_each_mut("decoder.head", f);
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each(&mut |n, _| out.push(n.to_string()));
        out
    }

    pub fn leaves(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.for_each(&mut |_, t| out.push(t));
        out
    }

    /// A tree with this layout holding `leaves` in canonical order.
    pub fn with_leaves<U: Clone>(&self, leaves: &[U]) -> ModelParams<U> {
        let mut it = leaves.iter();
        let out = self.map(&mut |name, _| it.next().unwrap_or_else(|| panic!("no leaf left for {name}")).clone());
        assert!(it.next().is_none(), "more leaves than tensors");
        out
    }

    pub fn leaves_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        self.for_each_mut(&mut |_, t| out.push(t));
        out
    }
}

impl ModelParams<Matrix> {
    /// All-zero tensors with the shapes implied by `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, c, kt) = (cfg.hidden, cfg.channels, cfg.theta_len());
        let z = Matrix::zeros;
        let extractor = || SignalExtractorParams {
            pool_proj_weight: z(d, 1),
            pool_proj_bias: z(1, d),
            pool_score_weight: z(1, d),
            pool_score_bias: z(1, 1),
            theta_hidden_weight: z(d, d),
            theta_hidden_bias: z(1, d),
            theta_out_weight: z(kt, d),
            theta_out_bias: z(1, kt),
        };
        let gru = || GruParams {
            input_weight: z(3 * d, c),
            hidden_weight: z(3 * d, d),
            input_bias: z(1, 3 * d),
            hidden_bias: z(1, 3 * d),
        };
        ModelParams {
            extractors: [extractor(), extractor(), extractor()],
            encoder: gru(),
            decoder: DecoderParams {
                cell: gru(),
                head: HeadParams {
                    norm_gain: z(1, d),
                    norm_bias: z(1, d),
                    out_weight: z(1, d),
                    out_bias: z(1, 1),
                },
            },
        }
    }

    /// Weights uniform in ±1/√fan_in from the init stream of `cfg.seed`,
    /// biases zero, layer-norm gain one.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut params = Self::zeros(cfg);
        let mut rng = Rng::stream(cfg.seed, Purpose::Init);
        params.for_each_mut(&mut |name, t| {
            if name.ends_with("_weight") {
                let bound = 1.0 / (t.cols() as f64).sqrt();
                t.data_mut().iter_mut().for_each(|v| *v = rng.uniform_in(-bound, bound));
            } else if name.ends_with("norm_gain") {
                t.fill(1.0);
            }
        });
        params
    }

    /// Number of learnable scalars.
    pub fn count(&self) -> usize {
        self.leaves().iter().map(|m| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.leaves().iter().all(|m| m.is_finite())
    }
}
