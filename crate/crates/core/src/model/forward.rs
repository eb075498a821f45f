use std::sync::{Arc, OnceLock};

use crate::decoder::{cell_update_graph, head_graph};
use crate::encoder::{attention_graph, gru_graph, AttentionConfig, AttentionOutput};
use crate::error::{Error, Result};
use crate::features::{build_basis, extract_graph, ExtractOutput, SeasonalityBasis};
use crate::numeric::{Graph, Matrix, Mode, Rng, Var, SMALL_ROWS};

use super::config::ModelConfig;
use super::params::ModelParams;

/// Every intermediate of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub extract: ExtractOutput,
    /// h_1…h_n, each B×d.
    pub hidden: Vec<Var>,
    pub attention: AttentionOutput,
    /// g_t, B×d.
    pub context: Var,
    /// Decoder state after the latest-measurement update, B×d.
    pub state: Var,
    /// B×1 predictions.
    pub soc: Var,
}

/// Builds the forward pass for a batch of row-major L×C windows.
pub fn forward_graph(
    g: &mut Graph,
    cfg: &ModelConfig,
    params: &ModelParams<Var>,
    basis: Var,
    windows: &[&[f64]],
    mode: Mode,
    rng: &mut Rng,
) -> Result<ForwardOutput> {
    let (l, c) = (cfg.window_len, cfg.channels);
    if windows.is_empty() {
        return Err(Error::Shape("empty batch".into()).at_stage("input"));
    }
    if let Some(w) = windows.iter().find(|w| w.len() != l * c) {
        return Err(Error::Shape(format!("window has {} values, expected {l}x{c}", w.len())).at_stage("input"));
    }
    if let Some(w) = windows.iter().find(|w| w.iter().any(|v| !v.is_finite())) {
        let bad = w.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::Contract(format!("non-finite input at sample {}, channel {}", bad / c, bad % c))
            .at_stage("input"));
    }

    let extract = extract_graph(g, windows, cfg.chunks, &params.extractors, basis)
        .map_err(|e| e.at_stage("feature-extraction"))?;
    let hidden = gru_graph(g, &extract.steps, cfg.hidden, &params.encoder).map_err(|e| e.at_stage("context-encoder"))?;
    let attention = attention_graph(g, &hidden, AttentionConfig { temperature: cfg.temperature })
        .map_err(|e| e.at_stage("context-encoder"))?;
    let context = *attention.context.last().expect("non-empty sequence");

    let latest: Vec<f64> = windows.iter().flat_map(|w| w[(l - 1) * c..].iter().copied()).collect();
    let latest = g.constant(Matrix::from_vec(windows.len(), c, latest)?);
    let state =
        cell_update_graph(g, latest, context, &params.decoder.cell).map_err(|e| e.at_stage("latest-decoder"))?;
    let soc = head_graph(g, state, &params.decoder.head, cfg.dropout, mode, rng)
        .map_err(|e| e.at_stage("latest-decoder"))?;
    Ok(ForwardOutput { extract, hidden, attention, context, state, soc })
}

/// Tensor shapes at each stage boundary of a forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTrace(pub Vec<(&'static str, Vec<usize>)>);

impl std::fmt::Display for ShapeTrace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, (name, shape)) in self.0.iter().enumerate() {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{name:<14} ({})", dims.join(", "))?;
        }
        Ok(())
    }
}

/// A configured network with its weights and the fixed basis.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    basis: SeasonalityBasis,
    /// Shared read-only copies for inference graphs; reset on mutable access.
    frozen: OnceLock<(ModelParams<Arc<Matrix>>, Arc<Matrix>)>,
}

impl Model {
    /// Validates `config` and draws fresh weights from its seed.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config);
        Self::from_params(config, params)
    }

    /// Checks every tensor shape against `config`.
    pub fn from_params(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let expected = ModelParams::zeros(&config);
        let mut mismatch = Vec::new();
        let shapes: Vec<(usize, usize)> = params.leaves().iter().map(|m| m.shape()).collect();
        expected.for_each(&mut |name, t| {
            mismatch.push((name.to_string(), t.shape()));
        });
        for ((name, want), got) in mismatch.iter().zip(&shapes) {
            if want != got {
                return Err(Error::Shape(format!("{name} is {}x{}, expected {}x{}", got.0, got.1, want.0, want.1)));
            }
        }
        let basis = build_basis(config.harmonics, config.token_len)?;
        Ok(Self { config, params, basis, frozen: OnceLock::new() })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        self.frozen = OnceLock::new();
        &mut self.params
    }

    pub fn basis(&self) -> &SeasonalityBasis {
        &self.basis
    }

    pub fn count_params(&self) -> usize {
        self.params.count()
    }

    /// Places the weights on `g` as trainable leaves (or constants) and
    /// returns their handles along with the basis handle.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> (ModelParams<Var>, Var) {
        if trainable {
            let params = self.params.map(&mut |_, m| g.param(m.clone()));
            return (params, g.constant(self.basis.matrix().clone()));
        }
        let (params, basis) = self.frozen.get_or_init(|| {
            (self.params.map(&mut |_, m| Arc::new(m.clone())), Arc::new(self.basis.matrix().clone()))
        });
        (params.map(&mut |_, m| g.shared_constant(Arc::clone(m))), g.shared_constant(Arc::clone(basis)))
    }

    /// SOC for one L×C window.
    pub fn forward(&self, window: &Matrix, mode: Mode, rng: &mut Rng) -> Result<f64> {
        if window.shape() != (self.config.window_len, self.config.channels) {
            let (r, c) = window.shape();
            return Err(Error::Shape(format!(
                "window is {r}x{c}, expected {}x{}",
                self.config.window_len, self.config.channels
            ))
            .at_stage("input"));
        }
        let mut g = Graph::new();
        let (p, b) = self.bind(&mut g, false);
        let out = forward_graph(&mut g, &self.config, &p, b, &[window.data()], mode, rng)?;
        Ok(g.value(out.soc).item())
    }

    /// Eval-mode predictions for a batch of row-major windows.
    ///
    /// Batches smaller than [`SMALL_ROWS`] are topped up with copies of the
    /// last window so every product takes the batched kernel; a window's
    /// prediction is then bit-identical whatever it is batched with.
    pub fn predict_batch(&self, windows: &[&[f64]]) -> Result<Vec<f64>> {
        let Some(&last) = windows.last() else {
            return Ok(Vec::new());
        };
        let mut filled = windows.to_vec();
        filled.resize(windows.len().max(SMALL_ROWS), last);
        let mut g = Graph::new();
        let (p, b) = self.bind(&mut g, false);
        let mut rng = Rng::new(0);
        let out = forward_graph(&mut g, &self.config, &p, b, &filled, Mode::Eval, &mut rng)?;
        Ok(g.value(out.soc).data()[..windows.len()].to_vec())
    }

    /// Eval-mode predictions for any number of windows, `batch` at a time,
    /// spread over threads.
    pub fn predict_many(&self, windows: &[&[f64]], batch: usize) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        let parts: Vec<Vec<f64>> =
            windows.par_chunks(batch.max(1)).map(|c| self.predict_batch(c)).collect::<Result<_>>()?;
        Ok(parts.concat())
    }

    /// Shapes at each stage for a batch of `batch` windows.
    pub fn shape_trace(&self, batch: usize) -> Result<ShapeTrace> {
        let cfg = &self.config;
        let window = vec![0.5; cfg.window_len * cfg.channels];
        let windows: Vec<&[f64]> = (0..batch).map(|_| window.as_slice()).collect();
        let mut g = Graph::new();
        let (p, b) = self.bind(&mut g, false);
        let out = forward_graph(&mut g, cfg, &p, b, &windows, Mode::Eval, &mut Rng::new(0))?;
        let dims = |v: Var| g.shape(v);
        let theta_cols = dims(out.extract.thetas[0]).1;
        let token_cols = dims(out.extract.tokens[0]).1;
        Ok(ShapeTrace(vec![
            ("input", vec![batch, cfg.window_len, cfg.channels]),
            ("chunks", vec![batch, cfg.chunks, cfg.chunk_len(), cfg.channels]),
            ("theta", vec![batch, cfg.chunks, theta_cols]),
            ("tokens", vec![batch, cfg.chunks, token_cols]),
            ("sequence", vec![batch, out.extract.steps.len(), dims(out.extract.steps[0]).1]),
            ("gru", vec![batch, out.hidden.len(), dims(out.hidden[0]).1]),
            ("attention", vec![batch, out.attention.context.len(), dims(out.attention.context[0]).1]),
            ("context", vec![batch, dims(out.context).1]),
            ("decoder", vec![batch, dims(out.state).1]),
            ("soc", vec![batch, dims(out.soc).1]),
        ]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Purpose;

    fn tiny() -> ModelConfig {
        ModelConfig { window_len: 40, chunks: 5, hidden: 8, harmonics: 2, ..Default::default() }
    }

    fn window(l: usize, seed: u64) -> Matrix {
        let mut r = Rng::stream(seed, Purpose::Custom(1));
        Matrix::from_vec(l, 3, (0..l * 3).map(|_| r.uniform()).collect()).unwrap()
    }

    #[test]
    fn default_trace() {
        let m = Model::new(ModelConfig::default()).unwrap();
        let t = m.shape_trace(4).unwrap();
        let shapes: Vec<Vec<usize>> = t.0.iter().map(|(_, s)| s.clone()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![4, 200, 3],
                vec![4, 5, 40, 3],
                vec![4, 5, 21],
                vec![4, 5, 1],
                vec![4, 5, 3],
                vec![4, 5, 128],
                vec![4, 5, 128],
                vec![4, 128],
                vec![4, 128],
                vec![4, 1],
            ]
        );
        assert_eq!(m.count_params(), 161_347);
    }

    #[test]
    fn eval_is_deterministic_and_bounded() {
        let m = Model::new(tiny()).unwrap();
        let w = window(40, 3);
        let a = m.forward(&w, Mode::Eval, &mut Rng::new(1)).unwrap();
        let b = m.forward(&w, Mode::Eval, &mut Rng::new(2)).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn batch_matches_single() {
        let m = Model::new(tiny()).unwrap();
        let ws: Vec<Matrix> = (0..6).map(|s| window(40, s)).collect();
        let refs: Vec<&[f64]> = ws.iter().map(|w| w.data()).collect();
        let batch = m.predict_batch(&refs).unwrap();
        let many = m.predict_many(&refs, 4).unwrap();
        for (i, w) in ws.iter().enumerate() {
            let one = m.forward(w, Mode::Eval, &mut Rng::new(0)).unwrap();
            assert!((batch[i] - one).abs() < 1e-12);
            assert_eq!(many[i], batch[i]);
            assert_eq!(m.predict_batch(&refs[i..=i]).unwrap()[0], batch[i]);
        }
    }

    #[test]
    fn train_mode_uses_dropout() {
        let m = Model::new(ModelConfig { dropout: 0.5, ..tiny() }).unwrap();
        let w = window(40, 4);
        let mut rng = Rng::stream(0, Purpose::Dropout);
        let outs: Vec<f64> = (0..8).map(|_| m.forward(&w, Mode::Train, &mut rng).unwrap()).collect();
        assert!(outs.iter().any(|&o| o != outs[0]));
    }

    #[test]
    fn rejects_wrong_window() {
        let m = Model::new(tiny()).unwrap();
        let err = m.forward(&window(39, 0), Mode::Eval, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "input", .. }), "{err}");
        let mut w = window(40, 0);
        w.set(7, 1, f64::NAN);
        let err = m.forward(&w, Mode::Eval, &mut Rng::new(0)).unwrap_err();
        assert!(err.to_string().contains("sample 7, channel 1"), "{err}");
    }

    #[test]
    fn rejects_bad_params() {
        let cfg = tiny();
        let mut p = ModelParams::init(&cfg);
        p.encoder.hidden_weight = Matrix::zeros(3, 3);
        let err = Model::from_params(cfg, p).unwrap_err();
        assert!(err.to_string().contains("encoder.gru.hidden_weight"), "{err}");
    }

    #[test]
    fn latest_sample_matters() {
        let m = Model::new(tiny()).unwrap();
        let mut w = window(40, 5);
        let a = m.forward(&w, Mode::Eval, &mut Rng::new(0)).unwrap();
        w.set(39, 0, w.get(39, 0) + 0.5);
        let b = m.forward(&w, Mode::Eval, &mut Rng::new(0)).unwrap();
        assert_ne!(a, b);
    }
}
