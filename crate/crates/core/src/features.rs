//! Chunking and per-signal tokenization of an input window.
//!
//! Each of the N chunks of each signal is attention-pooled into a width-d
//! vector, mapped by a two-layer ReLU network to 1 + 2K Fourier coefficients,
//! and projected through a fixed seasonality basis into an H-long token.
//! Stacking the tokens of current, voltage and temperature column-wise gives
//! the (N·H)×3 token sequence consumed by the encoder.

use crate::error::{Error, Result};
use crate::model::SignalExtractorParams;
use crate::numeric::{Graph, Matrix, SoftmaxMask, Var};

/// A window reshaped into N contiguous, non-overlapping chunks of L/N rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedWindow {
    chunks: usize,
    chunk_len: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ChunkedWindow {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.chunks, self.chunk_len, self.channels)
    }

    /// Sample `tau` of chunk `n`, channel `c`.
    pub fn get(&self, n: usize, tau: usize, c: usize) -> f64 {
        self.data[(n * self.chunk_len + tau) * self.channels + c]
    }

    /// The length-L/N sequence of channel `c` within chunk `n`.
    pub fn signal(&self, n: usize, c: usize) -> Vec<f64> {
        (0..self.chunk_len).map(|t| self.get(n, t, c)).collect()
    }
}

/// Splits an L×C window into N chunks. Row `n·L_c + τ` becomes chunk `n`, row `τ`.
pub fn chunk(window: &Matrix, chunks: usize) -> Result<ChunkedWindow> {
    let (l, c) = window.shape();
    if chunks == 0 || l % chunks != 0 {
        return Err(Error::Config(vec![format!("{chunks} chunks do not divide a window of {l} samples")]));
    }
    Ok(ChunkedWindow { chunks, chunk_len: l / chunks, channels: c, data: window.data().to_vec() })
}

/// Constant `K_θ×H` Fourier basis: a row of ones followed by cos/sin pairs of
/// harmonics 1…K on the grid `t_j = j/H`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalityBasis {
    matrix: Matrix,
    harmonics: usize,
}

impl SeasonalityBasis {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    pub fn token_len(&self) -> usize {
        self.matrix.cols()
    }
}

pub fn build_basis(harmonics: usize, token_len: usize) -> Result<SeasonalityBasis> {
    if harmonics == 0 || token_len == 0 {
        return Err(Error::Parameter(format!(
            "basis needs at least one harmonic and one time step (K={harmonics}, H={token_len})"
        )));
    }
    let mut m = Matrix::zeros(1 + 2 * harmonics, token_len);
    for j in 0..token_len {
        let t = j as f64 / token_len as f64;
        m.set(0, j, 1.0);
        for k in 1..=harmonics {
            let angle = std::f64::consts::TAU * k as f64 * t;
            m.set(2 * k - 1, j, angle.cos());
            m.set(2 * k, j, angle.sin());
        }
    }
    Ok(SeasonalityBasis { matrix: m, harmonics })
}

/// Graph handles produced by pooling a batch of G chunk sequences.
#[derive(Debug, Clone, Copy)]
pub struct PoolOutput {
    /// G×L_c softmax weights.
    pub weights: Var,
    /// G×d pooled representations.
    pub pooled: Var,
}

/// Attention pooling over G sequences stacked as a (G·L_c)×1 column:
/// `h_τ = W_p s_τ + b_p`, `e_τ = W_a h_τ + b_a`, `α = softmax(e)`, `z = Σ α_τ h_τ`.
///
/// Because `h_τ` is affine in the scalar `s_τ` and the weights sum to one,
/// this is evaluated without materializing any `h_τ`:
/// `e_τ = (W_a W_p) s_τ + (W_a b_p + b_a)` and `z = (Σ α_τ s_τ) W_p + b_p`.
pub fn pool_graph(g: &mut Graph, signal: Var, chunk_len: usize, p: &SignalExtractorParams<Var>) -> Result<PoolOutput> {
    let rows = g.shape(signal).0;
    if chunk_len == 0 || rows % chunk_len != 0 || g.shape(signal).1 != 1 {
        return Err(Error::Shape(format!("{rows} samples do not split into chunks of {chunk_len}")));
    }
    let gain = g.matmul(p.pool_score_weight, p.pool_proj_weight)?;
    let offset = g.linear(p.pool_proj_bias, p.pool_score_weight, p.pool_score_bias)?;
    let scores = g.matmul(signal, gain)?;
    let scores = g.add_row(scores, offset)?;
    let scores = g.reshape(scores, rows / chunk_len, chunk_len)?;
    let weights = g.masked_softmax(scores, SoftmaxMask::None, 1.0)?;
    let mean_signal = g.pool_rows(weights, signal)?;
    let pooled = g.linear(mean_signal, p.pool_proj_weight, p.pool_proj_bias)?;
    Ok(PoolOutput { weights, pooled })
}

/// `θ = Lin₂(ReLU(Lin₁(z)))`, G×d → G×K_θ.
pub fn project_graph(g: &mut Graph, pooled: Var, p: &SignalExtractorParams<Var>) -> Result<Var> {
    let h = g.linear(pooled, p.theta_hidden_weight, p.theta_hidden_bias)?;
    let h = g.relu(h);
    g.linear(h, p.theta_out_weight, p.theta_out_bias)
}

/// `o = θ B`, G×K_θ → G×H.
pub fn token_graph(g: &mut Graph, theta: Var, basis: Var) -> Result<Var> {
    g.matmul(theta, basis)
}

/// Per-signal intermediates of [`extract_graph`], indexed (current, voltage, temperature).
#[derive(Debug, Clone)]
pub struct ExtractOutput {
    pub pools: [PoolOutput; 3],
    /// (B·N)×K_θ coefficients.
    pub thetas: [Var; 3],
    /// (B·N)×H tokens.
    pub tokens: [Var; 3],
    /// The fused token sequence as N·H steps of B×3 rows.
    pub steps: Vec<Var>,
}

/// Tokenizes a batch of windows, each a row-major L×3 slice.
pub fn extract_graph(
    g: &mut Graph,
    windows: &[&[f64]],
    chunks: usize,
    params: &[SignalExtractorParams<Var>; 3],
    basis: Var,
) -> Result<ExtractOutput> {
    let b = windows.len();
    let l = windows.first().map_or(0, |w| w.len() / 3);
    if b == 0 || windows.iter().any(|w| w.len() != l * 3) {
        return Err(Error::Shape("windows must be non-empty, equally long L×3 blocks".into()));
    }
    if chunks == 0 || l % chunks != 0 {
        return Err(Error::Config(vec![format!("{chunks} chunks do not divide a window of {l} samples")]));
    }
    let chunk_len = l / chunks;
    let token_len = g.shape(basis).1;

    let mut pools = Vec::with_capacity(3);
    let mut thetas = Vec::with_capacity(3);
    let mut tokens = Vec::with_capacity(3);
    for (c, p) in params.iter().enumerate() {
        // Chunking is an order-preserving reshape, so chunk n, step τ of window
        // b is simply row b·L + n·L_c + τ of the stacked column.
        let column: Vec<f64> = windows.iter().flat_map(|w| w.iter().skip(c).step_by(3).copied()).collect();
        let signal = g.constant(Matrix::from_vec(b * l, 1, column)?);
        let pool = pool_graph(g, signal, chunk_len, p)?;
        let theta = project_graph(g, pool.pooled, p)?;
        let token = token_graph(g, theta, basis)?;
        pools.push(pool);
        thetas.push(theta);
        tokens.push(token);
    }

    // Sequence position k = n·H + h of window b reads token row b·N + n, column h.
    let seq_len = chunks * token_len;
    let mut steps = Vec::with_capacity(seq_len);
    for k in 0..seq_len {
        let idx: Vec<usize> = (0..b).map(|bi| (bi * chunks + k / token_len) * token_len + k % token_len).collect();
        let cols = tokens
            .iter()
            .map(|&t| g.gather(t, idx.clone(), b, 1))
            .collect::<Result<Vec<_>>>()?;
        steps.push(g.concat_cols(&cols)?);
    }

    Ok(ExtractOutput {
        pools: [pools[0], pools[1], pools[2]],
        thetas: [thetas[0], thetas[1], thetas[2]],
        tokens: [tokens[0], tokens[1], tokens[2]],
        steps,
    })
}

fn bind(g: &mut Graph, p: &SignalExtractorParams) -> SignalExtractorParams<Var> {
    p.map("", &mut |_, m| g.constant(m.clone()))
}

/// Pools one chunk sequence; returns the attention weights and the pooled vector.
pub fn theta_attention_pool(signal: &[f64], p: &SignalExtractorParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut g = Graph::new();
    let bound = bind(&mut g, p);
    let s = g.constant(Matrix::column_vector(signal));
    let out = pool_graph(&mut g, s, signal.len(), &bound)?;
    Ok((g.value(out.weights).data().to_vec(), g.value(out.pooled).data().to_vec()))
}

/// Maps a pooled vector to its K_θ Fourier coefficients.
pub fn theta_project(pooled: &[f64], p: &SignalExtractorParams) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let bound = bind(&mut g, p);
    let z = g.constant(Matrix::row_vector(pooled));
    let theta = project_graph(&mut g, z, &bound)?;
    Ok(g.value(theta).data().to_vec())
}

/// `o = θᵀB` for a single coefficient vector.
pub fn make_token(theta: &[f64], basis: &SeasonalityBasis) -> Result<Vec<f64>> {
    if theta.len() != basis.matrix.rows() {
        return Err(Error::Shape(format!(
            "{} coefficients against a basis with {} rows",
            theta.len(),
            basis.matrix.rows()
        )));
    }
    Ok(Matrix::row_vector(theta).matmul(&basis.matrix)?.into_vec())
}

/// The fused (N·H)×3 token sequence Z of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub z: Matrix,
}

impl TokenSequence {
    /// Tokens of one signal as an N·H column (`Tok_I`, `Tok_V` or `Tok_T`).
    pub fn signal(&self, c: usize) -> Vec<f64> {
        (0..self.z.rows()).map(|r| self.z.get(r, c)).collect()
    }
}

/// Tokenizes one chunked window with the per-signal parameters.
pub fn extract_tokens(
    cw: &ChunkedWindow,
    params: &[SignalExtractorParams; 3],
    basis: &SeasonalityBasis,
) -> Result<TokenSequence> {
    if cw.channels != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {}", cw.channels)));
    }
    let mut g = Graph::new();
    let bound = [bind(&mut g, &params[0]), bind(&mut g, &params[1]), bind(&mut g, &params[2])];
    let b = g.constant(basis.matrix.clone());
    let out = extract_graph(&mut g, &[&cw.data], cw.chunks, &bound, b)?;
    let mut z = Matrix::zeros(out.steps.len(), 3);
    for (k, &s) in out.steps.iter().enumerate() {
        z.row_mut(k).copy_from_slice(g.value(s).row(0));
    }
    Ok(TokenSequence { z })
}
