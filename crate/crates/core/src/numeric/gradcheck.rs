use super::graph::{Graph, Var};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Worst disagreement between reverse-mode and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, flat element index) of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares `backward()` against `(f(θ+εe) − f(θ−εe)) / 2ε` for every
/// coordinate of every parameter. The relative error of a coordinate is
/// `|a − n| / max(1, |a|, |n|)`.
///
/// `f` builds a scalar from the supplied parameter leaves; it is called once
/// for the analytic pass and twice per coordinate.
pub fn finite_difference_check<F>(f: F, params: &[Matrix], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {eps}")));
    }

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Matrix> = vars.iter().map(|&v| g.grad_or_zeros(v)).collect();

    let eval = |ps: &[Matrix]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let mut work: Vec<Matrix> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for k in 0..p.len() {
            let base = p.data()[k];
            work[pi].data_mut()[k] = base + eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[k] = base - eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[k] = base;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[k];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.coordinates += 1;
            if rel > report.max_rel_error || report.coordinates == 1 {
                report.max_rel_error = rel;
                report.worst = (pi, k);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::graph::{Activation, Mode, SoftmaxMask};
    use crate::numeric::rng::{Purpose, Rng};

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_is_exact() {
        let a = Matrix::from_rows(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let r = finite_difference_check(
            |g, p| {
                let c = g.constant(a.clone());
                let y = g.mul(p[0], c)?;
                Ok(g.sum(y))
            },
            &[Matrix::from_rows(&[&[0.1, 0.2], &[0.3, 0.4]])],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn quadratic_truncation_bound() {
        let r = finite_difference_check(
            |g, p| {
                let y = g.mul(p[0], p[0])?;
                let y = g.scale(y, 3.5);
                Ok(g.sum(y))
            },
            &[Matrix::row_vector(&[0.7, -1.3, 2.0])],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn matmul_contract() {
        let mut rng = Rng::stream(5, Purpose::Custom(0));
        let a = random(3, 4, &mut rng);
        let b = random(4, 2, &mut rng);
        let r = finite_difference_check(
            |g, p| {
                let y = g.matmul(p[0], p[1])?;
                let y = g.mul(y, y)?;
                Ok(g.sum(y))
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-7, "{r:?}");
    }

    #[test]
    fn three_layer_composition() {
        let mut rng = Rng::stream(11, Purpose::Custom(1));
        let x = random(5, 4, &mut rng);
        let params = vec![
            random(6, 4, &mut rng),
            random(1, 6, &mut rng),
            random(6, 6, &mut rng),
            random(1, 6, &mut rng),
            random(1, 6, &mut rng),
            random(1, 1, &mut rng),
        ];
        let r = finite_difference_check(
            |g, p| {
                let x = g.constant(x.clone());
                let h = g.linear(x, p[0], p[1])?;
                let h = g.tanh(h);
                let h = g.linear(h, p[2], p[3])?;
                let h = g.sigmoid(h);
                let y = g.linear(h, p[4], p[5])?;
                let y = g.mul(y, y)?;
                Ok(g.mean(y))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-7, "{r:?}");
    }

    /// Every op kind, chained so that each receives a non-trivial upstream gradient.
    #[test]
    fn every_op_kind() {
        let mut rng = Rng::stream(17, Purpose::Custom(2));
        let params = vec![
            random(4, 6, &mut rng), // x
            random(4, 6, &mut rng), // y
            random(1, 6, &mut rng), // row
            random(4, 1, &mut rng), // col
            random(1, 6, &mut rng), // gain
            random(1, 6, &mut rng), // bias
            random(2, 3, &mut rng), // pooling weights logits
        ];
        let r = finite_difference_check(
            |g, p| {
                let mut drop_rng = Rng::stream(3, Purpose::Dropout);
                let a = g.add(p[0], p[1])?;
                let b = g.sub(a, p[1])?;
                let c = g.mul(b, p[1])?;
                let c = g.add_row(c, p[2])?;
                let c = g.mul_col(c, p[3])?;
                let c = g.scale(c, 0.7);
                let c = g.activation(c, Activation::Relu);
                let d = g.add(c, p[0])?;
                let ln = g.layer_norm(d, p[4], p[5], 1e-5)?;
                let dr = g.dropout(ln, 0.3, Mode::Train, &mut drop_rng)?;
                let sm = g.masked_softmax(dr, SoftmaxMask::Causal, 0.8)?;
                let sm2 = g.masked_softmax(p[1], SoftmaxMask::Prefix(4), 1.3)?;
                let e = g.add(sm, sm2)?;
                let e = g.reshape(e, 6, 4)?;
                let f = g.slice_cols(e, 1, 3)?;
                let gg = g.gather(p[0], vec![5, 0, 7, 7, 23, 11], 6, 1)?;
                let h = g.concat_cols(&[f, gg])?;
                let w = g.masked_softmax(p[6], SoftmaxMask::None, 1.0)?;
                let pooled = g.pool_rows(w, h)?;
                let nr = g.normalize_rows(p[0], 1e-12);
                let rd = g.row_dot(nr, p[1])?;
                let t = g.tanh(pooled);
                let s1 = g.sum(t);
                let s2 = g.mean(rd);
                let m = g.matmul_nt(p[0], p[1])?;
                let m = g.sigmoid(m);
                let s3 = g.mean(m);
                let tot = g.add(s1, s2)?;
                let tot = g.add(tot, s3)?;
                g.mul(tot, tot)
            },
            &params,
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn rejects_non_positive_step() {
        assert!(finite_difference_check(|g, p| Ok(g.sum(p[0])), &[Matrix::scalar(1.0)], 0.0).is_err());
    }
}
