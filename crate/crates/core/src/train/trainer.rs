use std::time::Instant;

use super::config::TrainConfig;
use super::optim::{adamw_step, OptimState};
use crate::data::{ScaledRecord, WindowDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate_scaled, MetricsReport};
use crate::model::{forward_graph, Model, ModelConfig, ModelParams};
use crate::numeric::{Graph, Matrix, Mode, Purpose, Rng, Var};

/// Windows per forward batch when scoring a validation set.
const VAL_BATCH: usize = 256;

/// `(1/M) Σ (pred − target)²`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("{} predictions against {} targets", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub fn mse_loss_graph(g: &mut Graph, pred: Var, target: &[f64]) -> Result<Var> {
    if target.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let t = g.constant(Matrix::column_vector(target));
    let diff = g.sub(pred, t)?;
    let sq = g.mul(diff, diff)?;
    Ok(g.mean(sq))
}

/// Forward pass plus MSE for one batch.
pub fn batch_loss_graph(
    g: &mut Graph,
    cfg: &ModelConfig,
    params: &ModelParams<Var>,
    basis: Var,
    windows: &[&[f64]],
    targets: &[f64],
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var> {
    let out = forward_graph(g, cfg, params, basis, windows, mode, rng)?;
    mse_loss_graph(g, out.soc, targets)
}

/// Owns the optimizer state and dropout stream for one training run.
pub struct Trainer<'m> {
    model: &'m mut Model,
    cfg: TrainConfig,
    state: OptimState,
    dropout: Rng,
}

impl<'m> Trainer<'m> {
    pub fn new(model: &'m mut Model, cfg: TrainConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let state = OptimState::new(model.params().leaves());
        Ok(Self { model, cfg, state, dropout: Rng::stream(seed, Purpose::Dropout) })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn state(&self) -> &OptimState {
        &self.state
    }

    /// Train-mode forward, backward and one AdamW update. Returns the batch
    /// loss before the update.
    pub fn step(&mut self, windows: &[&[f64]], targets: &[f64]) -> Result<f64> {
        let mut g = Graph::new();
        let (p, basis) = self.model.bind(&mut g, true);
        let cfg = self.model.config().clone();
        let loss = batch_loss_graph(&mut g, &cfg, &p, basis, windows, targets, Mode::Train, &mut self.dropout)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Diverged { epoch: 0, batch: 0, loss: value, diagnostic: self.diagnose(None) });
        }
        g.backward(loss)?;
        let grads: Vec<Matrix> = p.leaves().into_iter().map(|&v| g.grad_or_zeros(v)).collect();
        if grads.iter().any(|m| !m.is_finite()) {
            return Err(Error::Diverged { epoch: 0, batch: 0, loss: value, diagnostic: self.diagnose(Some(&grads)) });
        }
        let mut leaves = self.model.params_mut().leaves_mut();
        adamw_step(&mut leaves, &grads, &mut self.state, &self.cfg)?;
        Ok(value)
    }

    fn diagnose(&self, grads: Option<&[Matrix]>) -> String {
        let params = self.model.params();
        let names = params.names();
        let mut bad: Vec<&str> = Vec::new();
        let mut largest = ("", 0.0f64);
        for (name, m) in names.iter().zip(params.leaves()) {
            if !m.is_finite() {
                bad.push(name);
            } else if m.max_abs() > largest.1 {
                largest = (name, m.max_abs());
            }
        }
        let mut s = format!(
            "optimizer step {}; largest |weight| {:.4e} in {}; non-finite weights: {:?}",
            self.state.step, largest.1, largest.0, bad
        );
        if let Some(grads) = grads {
            let nonfinite: Vec<&str> =
                names.iter().zip(grads).filter(|(_, g)| !g.is_finite()).map(|(n, _)| n.as_str()).collect();
            s.push_str(&format!("; non-finite gradients: {nonfinite:?}"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// Zero-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the minimum validation loss (training loss without a validation set).
    pub best_epoch: usize,
}

impl TrainHistory {
    /// `(train, val)` losses, excluding wall time.
    pub fn losses(&self) -> Vec<(f64, Option<f64>)> {
        self.epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect()
    }

    fn selection_loss(e: &EpochRecord) -> f64 {
        e.val_loss.unwrap_or(e.train_loss)
    }
}

impl std::fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "epoch {:>4}  train {:.6e}", self.epoch + 1, self.train_loss)?;
        if let Some(v) = self.val_loss {
            write!(f, "  val {v:.6e}")?;
        }
        write!(f, "  {:.2}s", self.seconds)
    }
}

/// Eval-mode MSE over a dataset.
pub fn dataset_loss(model: &Model, data: &WindowDataset) -> Result<f64> {
    let rows: Vec<&[f64]> = data.iter().map(|w| w.rows()).collect();
    let targets: Vec<f64> = data.iter().map(|w| w.target_soc()).collect();
    let preds = model.predict_many(&rows, VAL_BATCH)?;
    mse_loss(&preds, &targets)
}

/// Epoch loop: seeded reshuffling, train-mode updates over every window
/// (the last batch may be short), eval-mode validation, and selection of the
/// epoch with the lowest validation loss.
pub fn train(
    model: &mut Model,
    train_set: &WindowDataset,
    val_set: Option<&WindowDataset>,
    cfg: &TrainConfig,
    seed: u64,
    log: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InsufficientData("training set has no windows".into()));
    }
    if train_set.window_len() != model.config().window_len {
        return Err(Error::Shape(format!(
            "dataset windows of {} samples, model expects {}",
            train_set.window_len(),
            model.config().window_len
        )));
    }
    let val_set = val_set.filter(|v| !v.is_empty());
    let mut shuffle = Rng::stream(seed, Purpose::Shuffle);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut trainer = Trainer::new(model, cfg.clone(), seed)?;

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        if cfg.shuffle {
            shuffle.shuffle(&mut order);
        }
        let mut total = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let windows: Vec<&[f64]> = batch.iter().map(|&i| train_set.get(i).rows()).collect();
            let targets: Vec<f64> = batch.iter().map(|&i| train_set.get(i).target_soc()).collect();
            let loss = trainer.step(&windows, &targets).map_err(|e| match e {
                Error::Diverged { loss, diagnostic, .. } => Error::Diverged { epoch, batch: bi, loss, diagnostic },
                other => other,
            })?;
            total += loss * batch.len() as f64;
        }
        let val_loss = val_set.map(|v| dataset_loss(trainer.model(), v)).transpose()?;
        let record =
            EpochRecord { epoch, train_loss: total / order.len() as f64, val_loss, seconds: t0.elapsed().as_secs_f64() };
        log(&record);

        let score = TrainHistory::selection_loss(&record);
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            history.best_epoch = epoch;
            best = Some((score, trainer.model().params().clone()));
        }
        history.epochs.push(record);
    }

    if cfg.select_best {
        if let Some((_, params)) = best {
            *model.params_mut() = params;
        }
    }
    Ok(history)
}

/// One seed's trained model, history and held-out metrics.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub model: Model,
    pub history: TrainHistory,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct SeedRuns {
    pub runs: Vec<SeedRun>,
    /// Per-(cycle, metric) mean over seeds.
    pub average: MetricsReport,
}

impl SeedRuns {
    /// Standard deviation of the cross-cycle mean MAE over seeds.
    pub fn mae_spread(&self) -> f64 {
        let maes: Vec<f64> = self.runs.iter().filter_map(|r| r.report.average()).map(|m| m.mae).collect();
        let n = maes.len() as f64;
        let mean = maes.iter().sum::<f64>() / n;
        (maes.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Independent trainings, one per entry of `cfg.seeds`; each seed drives
/// initialization, shuffling and dropout. Seeds run concurrently on the rayon
/// pool; every run is bit-reproducible on its own.
pub fn run_seeds(
    model_cfg: &ModelConfig,
    train_set: &WindowDataset,
    val_set: Option<&WindowDataset>,
    eval_cycles: &[ScaledRecord],
    cfg: &TrainConfig,
    log: &(dyn Fn(u64, &EpochRecord) + Sync),
) -> Result<SeedRuns> {
    use rayon::prelude::*;
    cfg.validate()?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut model = Model::new(ModelConfig { seed, ..model_cfg.clone() })?;
            let history = train(&mut model, train_set, val_set, cfg, seed, &mut |r| log(seed, r))?;
            let mut report = MetricsReport { cycles: Vec::new() };
            for rec in eval_cycles {
                let (_, m) = evaluate_scaled(&model, rec)?;
                report.cycles.push((rec.cycle_name.clone(), m));
            }
            Ok(SeedRun { seed, model, history, report })
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<MetricsReport> = runs.iter().map(|r| r.report.clone()).collect();
    let average = if eval_cycles.is_empty() { MetricsReport { cycles: Vec::new() } } else { MetricsReport::mean_of(&reports)? };
    Ok(SeedRuns { runs, average })
}
