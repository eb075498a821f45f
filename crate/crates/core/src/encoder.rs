//! Context encoder: a single-layer GRU over the token sequence followed by
//! causal cosine attention.

use crate::error::{Error, Result};
use crate::model::GruParams;
use crate::numeric::{Graph, Matrix, SoftmaxMask, Var};

/// Norms below this are floored before cosine normalization.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub temperature: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self { temperature: 1.0 }
    }
}

/// One GRU step on a batch: `x` is B×C, `h` is B×d.
///
/// r = σ(W_r x + b_ir + U_r h + b_hr)
/// u = σ(W_u x + b_iu + U_u h + b_hu)
/// h̃ = tanh(W_h x + b_ih + r ⊙ (U_h h + b_hh))
/// h' = (1 − u) ⊙ h + u ⊙ h̃
pub fn gru_step(g: &mut Graph, x: Var, h: Var, p: &GruParams<Var>) -> Result<Var> {
    let d = g.shape(h).1;
    if g.shape(p.hidden_weight) != (3 * d, d) {
        let (r, c) = g.shape(p.hidden_weight);
        return Err(Error::Shape(format!("hidden state of width {d} against a {r}x{c} recurrent weight")));
    }
    let gi = g.linear(x, p.input_weight, p.input_bias)?;
    let gh = g.linear(h, p.hidden_weight, p.hidden_bias)?;

    let (ir, hr) = (g.slice_cols(gi, 0, d)?, g.slice_cols(gh, 0, d)?);
    let r = g.add(ir, hr)?;
    let r = g.sigmoid(r);

    let (iu, hu) = (g.slice_cols(gi, d, 2 * d)?, g.slice_cols(gh, d, 2 * d)?);
    let u = g.add(iu, hu)?;
    let u = g.sigmoid(u);

    let (ic, hc) = (g.slice_cols(gi, 2 * d, 3 * d)?, g.slice_cols(gh, 2 * d, 3 * d)?);
    let gated = g.mul(r, hc)?;
    let cand = g.add(ic, gated)?;
    let cand = g.tanh(cand);

    // h + u ⊙ (h̃ − h)
    let delta = g.sub(cand, h)?;
    let step = g.mul(u, delta)?;
    g.add(h, step)
}

/// Runs the GRU from a zero state over `steps` (each B×C); returns h_1…h_n.
pub fn gru_graph(g: &mut Graph, steps: &[Var], hidden: usize, p: &GruParams<Var>) -> Result<Vec<Var>> {
    let Some(&first) = steps.first() else {
        return Err(Error::Shape("empty input sequence".into()));
    };
    let c = g.shape(p.input_weight).1;
    let batch = g.shape(first).0;
    let mut h = g.constant(Matrix::zeros(batch, hidden));
    let mut out = Vec::with_capacity(steps.len());
    for &x in steps {
        if g.shape(x) != (batch, c) {
            let (r, cc) = g.shape(x);
            return Err(Error::Shape(format!("GRU input step is {r}x{cc}, expected {batch}x{c}")));
        }
        h = gru_step(g, x, h, p)?;
        out.push(h);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// Row i of every batch element: B×n weights, exactly zero for j > i.
    pub weights: Vec<Var>,
    /// g_1…g_n, each B×d.
    pub context: Vec<Var>,
}

/// Causal cosine attention over a batch of hidden sequences `hs` (n steps of B×d).
///
/// `s_ij = ĥ_i·ĥ_j` with `ĥ = h/max(‖h‖, ε)`, future columns masked,
/// `a_i = softmax(s_i/τ)`, and `g_i = Σ_{j≤i} a_ij h_j` over un-normalized states.
pub fn attention_graph(g: &mut Graph, hs: &[Var], cfg: AttentionConfig) -> Result<AttentionOutput> {
    let n = hs.len();
    if n == 0 {
        return Err(Error::Shape("empty hidden sequence".into()));
    }
    let batch = g.shape(hs[0]).0;
    let unit: Vec<Var> = hs.iter().map(|&h| g.normalize_rows(h, NORM_FLOOR)).collect();
    let masked = g.constant(Matrix::zeros(batch, 1));

    let mut weights = Vec::with_capacity(n);
    let mut context = Vec::with_capacity(n);
    for i in 0..n {
        let mut cols = Vec::with_capacity(n);
        for j in 0..=i {
            cols.push(g.row_dot(unit[i], unit[j])?);
        }
        cols.resize(n, masked);
        let scores = g.concat_cols(&cols)?;
        let a = g.masked_softmax(scores, SoftmaxMask::Prefix(i + 1), cfg.temperature)?;
        let mut acc = None;
        for (j, &h) in hs.iter().enumerate().take(i + 1) {
            let w = g.slice_cols(a, j, j + 1)?;
            let term = g.mul_col(h, w)?;
            acc = Some(match acc {
                None => term,
                Some(prev) => g.add(prev, term)?,
            });
        }
        weights.push(a);
        context.push(acc.expect("at least one term"));
    }
    Ok(AttentionOutput { weights, context })
}

fn bind(g: &mut Graph, p: &GruParams) -> GruParams<Var> {
    p.map("", &mut |_, m| g.constant(m.clone()))
}

/// Runs the GRU over one token sequence Z (n×C) and returns H (n×d).
pub fn gru_forward(z: &Matrix, p: &GruParams) -> Result<Matrix> {
    let (n, c) = z.shape();
    if c != p.input_weight.cols() {
        return Err(Error::Shape(format!("token sequence has {c} columns, GRU expects {}", p.input_weight.cols())));
    }
    let d = p.hidden_weight.cols();
    let mut g = Graph::new();
    let bound = bind(&mut g, p);
    let steps: Vec<Var> = (0..n).map(|k| g.constant(Matrix::row_vector(z.row(k)))).collect();
    let hs = gru_graph(&mut g, &steps, d, &bound)?;
    let mut out = Matrix::zeros(n, d);
    for (k, &h) in hs.iter().enumerate() {
        out.row_mut(k).copy_from_slice(g.value(h).data());
    }
    Ok(out)
}

/// Attention over one hidden sequence H (n×d): returns the n×n weight matrix
/// and G (n×d).
pub fn causal_cosine_attention(h: &Matrix, cfg: AttentionConfig) -> Result<(Matrix, Matrix)> {
    let (n, d) = h.shape();
    let mut g = Graph::new();
    let hs: Vec<Var> = (0..n).map(|k| g.constant(Matrix::row_vector(h.row(k)))).collect();
    let out = attention_graph(&mut g, &hs, cfg)?;
    let mut weights = Matrix::zeros(n, n);
    let mut context = Matrix::zeros(n, d);
    for i in 0..n {
        weights.row_mut(i).copy_from_slice(g.value(out.weights[i]).data());
        context.row_mut(i).copy_from_slice(g.value(out.context[i]).data());
    }
    Ok((weights, context))
}

/// The last row of G.
pub fn take_context(g_seq: &Matrix) -> Result<Vec<f64>> {
    match g_seq.rows() {
        0 => Err(Error::Shape("cannot take the context of an empty sequence".into())),
        n => Ok(g_seq.row(n - 1).to_vec()),
    }
}
