//! Latest-measurement decoder: one GRU-cell update of the encoder context with
//! the newest sample, then layer norm, dropout, a linear map and a sigmoid.

use crate::encoder::gru_step;
use crate::error::{Error, Result};
use crate::model::{GruParams, HeadParams};
use crate::numeric::{Graph, Matrix, Mode, Rng, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `GRUCell(x_t, g_t)`: x is B×C, context B×d.
pub fn cell_update_graph(g: &mut Graph, x: Var, context: Var, p: &GruParams<Var>) -> Result<Var> {
    gru_step(g, x, context, p)
}

/// `σ(W_o · Dropout(LayerNorm(h)) + b_o)`, B×d → B×1.
pub fn head_graph(g: &mut Graph, h: Var, p: &HeadParams<Var>, dropout: f64, mode: Mode, rng: &mut Rng) -> Result<Var> {
    let n = g.layer_norm(h, p.norm_gain, p.norm_bias, LAYER_NORM_EPS)?;
    let n = g.dropout(n, dropout, mode, rng)?;
    let y = g.linear(n, p.out_weight, p.out_bias)?;
    Ok(g.sigmoid(y))
}

/// One cell update for a single (x_t, g_t) pair.
pub fn cell_update(x: &[f64], context: &[f64], p: &GruParams) -> Result<Vec<f64>> {
    if x.len() != p.input_weight.cols() || context.len() != p.hidden_weight.cols() {
        return Err(Error::Shape(format!(
            "cell expects input {} and state {}, got {} and {}",
            p.input_weight.cols(),
            p.hidden_weight.cols(),
            x.len(),
            context.len()
        )));
    }
    let mut g = Graph::new();
    let bound = p.map("", &mut |_, m| g.constant(m.clone()));
    let xv = g.constant(Matrix::row_vector(x));
    let cv = g.constant(Matrix::row_vector(context));
    let h = cell_update_graph(&mut g, xv, cv, &bound)?;
    Ok(g.value(h).data().to_vec())
}

/// SOC from a decoder state.
pub fn soc_head(h: &[f64], p: &HeadParams, dropout: f64, mode: Mode, rng: &mut Rng) -> Result<f64> {
    let mut g = Graph::new();
    let bound = p.map("", &mut |_, m| g.constant(m.clone()));
    let hv = g.constant(Matrix::row_vector(h));
    let y = head_graph(&mut g, hv, &bound, dropout, mode, rng)?;
    Ok(g.value(y).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelParams};
    use crate::numeric::{sigmoid, Purpose};

    fn params(d: usize, seed: u64) -> ModelParams {
        ModelParams::init(&ModelConfig { hidden: d, harmonics: 1, seed, ..Default::default() })
    }

    #[test]
    fn zero_cell_halves_context() {
        let p = ModelParams::zeros(&ModelConfig { hidden: 5, harmonics: 1, ..Default::default() });
        let ctx = [0.4, -0.2, 1.0, 0.0, 3.0];
        let h = cell_update(&[0.1, 0.9, 0.5], &ctx, &p.decoder.cell).unwrap();
        for (a, b) in h.iter().zip(&ctx) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn default_shapes() {
        let p = params(128, 1);
        let h = cell_update(&[0.1, 0.9, 0.5], &vec![0.1; 128], &p.decoder.cell).unwrap();
        assert_eq!(h.len(), 128);
        assert!(cell_update(&[0.1, 0.9], &vec![0.1; 128], &p.decoder.cell).is_err());
    }

    #[test]
    fn scalar_hand_case_from_context() {
        let p = GruParams {
            input_weight: Matrix::filled(3, 1, 1.0),
            hidden_weight: Matrix::filled(3, 1, 1.0),
            input_bias: Matrix::zeros(1, 3),
            hidden_bias: Matrix::zeros(1, 3),
        };
        let (x, h0) = (1.0, 0.5);
        let r = sigmoid(x + h0);
        let u = sigmoid(x + h0);
        let cand = (x + r * h0).tanh();
        let want = (1.0 - u) * h0 + u * cand;
        let got = cell_update(&[x], &[h0], &p).unwrap();
        assert!((got[0] - want).abs() < 1e-15);
    }

    #[test]
    fn zero_output_weights_give_half() {
        let mut p = params(6, 2).decoder.head;
        p.out_weight.fill(0.0);
        let mut rng = Rng::new(0);
        assert_eq!(soc_head(&[9.0, -3.0, 0.1, 0.0, 4.0, 2.0], &p, 0.2, Mode::Eval, &mut rng).unwrap(), 0.5);
    }

    #[test]
    fn hand_head() {
        let p = HeadParams {
            norm_gain: Matrix::row_vector(&[1.0, 1.0]),
            norm_bias: Matrix::zeros(1, 2),
            out_weight: Matrix::row_vector(&[1.0, 0.0]),
            out_bias: Matrix::scalar(0.0),
        };
        let soc = soc_head(&[1.0, -1.0], &p, 0.2, Mode::Eval, &mut Rng::new(0)).unwrap();
        // layer_norm([1,−1]) = [1,−1]/sqrt(1+eps)
        let want = sigmoid(1.0 / (1.0 + LAYER_NORM_EPS).sqrt());
        assert!((soc - want).abs() < 1e-15);
        assert!((soc - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn output_in_open_unit_interval() {
        let mut rng = Rng::stream(3, Purpose::Custom(4));
        for seed in 0..50 {
            let p = params(8, seed).decoder.head;
            let h: Vec<f64> = (0..8).map(|_| rng.uniform_in(-50.0, 50.0)).collect();
            for mode in [Mode::Eval, Mode::Train] {
                let s = soc_head(&h, &p, 0.2, mode, &mut rng).unwrap();
                assert!(s > 0.0 && s < 1.0);
            }
        }
    }
}
