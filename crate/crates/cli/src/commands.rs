use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use c2l_core::data::{
    apply_scaler, fit_scaler, synth_drive_cycle, DataManifest, DriveCycleRecord, ManifestEntry, ProfileStyle,
    ScaledRecord, ScalerParams, SplitCatalog, SynthConfig, WindowDataset,
};
use c2l_core::eval::{benchmark_latency, evaluate_scaled, export_trace, MetricsReport};
use c2l_core::model::{load_checkpoint, save_checkpoint, storage_mib, Checkpoint, Model, ModelConfig, Precision};
use c2l_core::numeric::{Purpose, Rng};
use c2l_core::train::{run_seeds, TrainConfig};
use c2l_core::{DataError, Matrix, Mode};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::layout::{write, RunLayout, CHECKPOINT_FILE};
use crate::{BenchArgs, EvalArgs, InputError, Overrides, PredictArgs, SynthArgs, TrainArgs};

/// Everything needed to rerun a training command.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_path: Option<PathBuf>,
    pub config_hash: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub data_dir: PathBuf,
    pub data: DataManifest,
    pub out_dir: PathBuf,
    pub scaler_digest: String,
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        return Err(InputError(format!("{what} {} does not exist or is not a directory", path.display())).into());
    }
    Ok(())
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(InputError(format!("{what} {} does not exist", path.display())).into());
    }
    Ok(())
}

fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) {
    let (m, t) = (&mut cfg.model, &mut cfg.train);
    macro_rules! set {
        ($($src:ident => $dst:expr),* $(,)?) => {$(if let Some(v) = o.$src.clone() { $dst = v; })*};
    }
    set! {
        epochs => t.epochs,
        batch_size => t.batch_size,
        lr => t.learning_rate,
        weight_decay => t.weight_decay,
        stride => t.stride,
        seeds => t.seeds,
        hidden => m.hidden,
        harmonics => m.harmonics,
        window_len => m.window_len,
        chunks => m.chunks,
    }
    if o.last_epoch {
        t.select_best = false;
    }
}

fn load_scaler(path: &Path) -> Result<ScalerParams> {
    require_file(path, "scaler file")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing scaler {}", path.display()))
}

/// Loads a checkpoint and refuses a scaler other than the one it was trained with.
fn load_model(checkpoint: &Path, scaler_path: &Path) -> Result<(Model, ScalerParams)> {
    require_file(checkpoint, "checkpoint")?;
    let scaler = load_scaler(scaler_path)?;
    let ckpt = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let digest = scaler.digest();
    match ckpt.metadata.get("scaler_digest") {
        Some(d) if *d == digest => {}
        Some(d) => {
            return Err(DataError::Leakage(format!(
                "scaler {} (digest {digest}) is not the scaler this checkpoint was trained with (digest {d})",
                scaler_path.display()
            ))
            .into())
        }
        None => bail!("checkpoint {} records no scaler digest", checkpoint.display()),
    }
    Ok((Model::from_params(ckpt.config, ckpt.params)?, scaler))
}

fn scale_all(records: &[DriveCycleRecord], scaler: &ScalerParams) -> Vec<ScaledRecord> {
    records.iter().map(|r| apply_scaler(r, scaler)).collect()
}

fn write_report(layout: &RunLayout, name: &str, report: &MetricsReport) -> Result<()> {
    write(&layout.metrics(name, "txt"), report.to_table())?;
    write(&layout.metrics(name, "kv"), report.to_key_values())?;
    write(&layout.metrics(name, "json"), serde_json::to_string_pretty(report)? + "\n")
}

pub fn train(a: TrainArgs) -> Result<()> {
    require_dir(&a.data, "data directory")?;
    let (mut cfg, config_path) = RunConfig::resolve(a.config.as_deref())?;
    apply_overrides(&mut cfg, &a.overrides);
    cfg.model.validate()?;
    cfg.train.validate()?;

    let manifest = DataManifest::discover(&a.data)?;
    let split = manifest.load_split(&a.data)?;
    if split.train.is_empty() {
        return Err(InputError(format!("{} has no training cycles", a.data.display())).into());
    }
    let scaler = fit_scaler(&split.train)?;
    let layout = RunLayout::create(&a.out, &["logs", "checkpoints", "metrics"])?;
    let hash = cfg.hash();
    let run = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_path,
        config_hash: hash.clone(),
        model: cfg.model.clone(),
        train: cfg.train.clone(),
        seeds: cfg.train.seeds.clone(),
        data_dir: a.data.clone(),
        data: manifest,
        out_dir: a.out.clone(),
        scaler_digest: scaler.digest(),
    };
    write(&layout.manifest(), serde_json::to_string_pretty(&run)? + "\n")?;
    write(&layout.scaler(), serde_json::to_string_pretty(&scaler)? + "\n")?;

    let l = cfg.model.window_len;
    let train_set = WindowDataset::new(scale_all(&split.train, &scaler), l, cfg.train.stride)?;
    let val_records = scale_all(&split.val, &scaler);
    let val_set =
        if val_records.is_empty() { None } else { Some(WindowDataset::new(val_records.clone(), l, cfg.train.stride)?) };
    eprintln!(
        "training {} seed(s) on {} windows from {} cycle(s); {} validation cycle(s); config {hash}",
        cfg.train.seeds.len(),
        train_set.len(),
        split.train.len(),
        val_records.len()
    );

    let mut logs = Vec::new();
    for &seed in &cfg.train.seeds {
        let path = layout.log(seed);
        logs.push((seed, Mutex::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?)));
    }
    let quiet = a.quiet;
    let log = |seed: u64, rec: &c2l_core::train::EpochRecord| {
        if let Some((_, f)) = logs.iter().find(|(s, _)| *s == seed) {
            let _ = writeln!(f.lock().expect("log lock"), "{rec}");
        }
        if !quiet {
            eprintln!("seed {seed}: {rec}");
        }
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs.max(1)).build()?;
    let runs = pool.install(|| run_seeds(&cfg.model, &train_set, val_set.as_ref(), &val_records, &cfg.train, &log))?;

    for r in &runs.runs {
        let dir = layout.checkpoint_dir(&hash, r.seed);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut ckpt = Checkpoint::new(r.model.config().clone(), r.model.params().clone());
        ckpt.metadata.insert("scaler_digest".into(), scaler.digest());
        ckpt.metadata.insert("seed".into(), r.seed.to_string());
        ckpt.metadata.insert("config_hash".into(), hash.clone());
        ckpt.metadata.insert("best_epoch".into(), (r.history.best_epoch + 1).to_string());
        ckpt.metadata.insert("epochs".into(), r.history.epochs.len().to_string());
        save_checkpoint(dir.join(CHECKPOINT_FILE), &ckpt, Precision::F64)?;
        if !r.report.cycles.is_empty() {
            write_report(&layout, &format!("val-seed{}", r.seed), &r.report)?;
        }
        println!("seed {}: best epoch {} -> {}", r.seed, r.history.best_epoch + 1, dir.join(CHECKPOINT_FILE).display());
    }
    if runs.average.cycles.is_empty() {
        println!("no validation cycles; metrics skipped");
    } else {
        write_report(&layout, "val", &runs.average)?;
        print!("{}", runs.average.to_table());
        if runs.runs.len() > 1 {
            println!("MAE spread across seeds (std): {:.4}", runs.mae_spread());
        }
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    require_dir(&a.data, "data directory")?;
    let (model, scaler) = load_model(&a.checkpoint, &a.scaler)?;
    let manifest = DataManifest::discover(&a.data)?;
    let split = manifest.load_split(&a.data)?;
    let records = match a.split.as_str() {
        "train" => split.train,
        "val" => split.val,
        "test" => split.test,
        _ => [split.train, split.val, split.test].concat(),
    };
    if records.is_empty() {
        return Err(InputError(format!("no {} cycles in {}", a.split, a.data.display())).into());
    }
    let layout = match &a.out {
        Some(out) => Some(RunLayout::create(out, if a.export_traces { &["metrics", "traces"] } else { &["metrics"] })?),
        None if a.export_traces => bail!("--export-traces needs --out"),
        None => None,
    };
    let mut report = MetricsReport { cycles: Vec::new() };
    for rec in scale_all(&records, &scaler) {
        let (trace, metrics) = evaluate_scaled(&model, &rec)?;
        let label = rec.cycle_name.clone();
        if let (Some(layout), true) = (&layout, a.export_traces) {
            export_trace(&trace, layout.trace(&label))?;
        }
        report.cycles.push((label, metrics));
    }
    print!("{}", report.to_table());
    if let Some(layout) = &layout {
        write_report(layout, &a.split, &report)?;
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let model = match &a.checkpoint {
        Some(path) => {
            require_file(path, "checkpoint")?;
            let ckpt = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            Model::from_params(ckpt.config, ckpt.params)?
        }
        None => Model::new(RunConfig::resolve(a.config.as_deref())?.0.model)?,
    };
    let n = model.count_params();
    let report = benchmark_latency(&model, a.trials, a.warmup)?;
    println!("parameters        {n}");
    println!("storage (32-bit)  {} bytes = {:.4} MiB", n * 4, storage_mib(n, Precision::F32));
    println!("storage (64-bit)  {} bytes = {:.4} MiB", n * 8, storage_mib(n, Precision::F64));
    println!("p50 latency       {:.4} ms", report.p50_ms);
    println!("p90 latency       {:.4} ms", report.p90_ms);
    println!("mean latency      {:.4} ms", report.mean_ms);
    println!("throughput        {:.1} inf/s", report.throughput);
    println!("trials / warmup   {} / {}", report.trials, report.warmup);
    println!("hardware          {}", report.hardware);
    if a.json {
        println!("{}", serde_json::to_string(&report)?);
    }
    Ok(())
}

/// Split for `n` synthetic cycles: the last quarter (at least one) for test,
/// one for validation when there are three or more, the rest for training.
fn synth_split(names: &[String]) -> SplitCatalog {
    let n = names.len();
    let test = if n >= 2 { (n / 4).max(1) } else { 0 };
    let val = usize::from(n >= 3);
    let train = n - test - val;
    SplitCatalog {
        train: names[..train].to_vec(),
        val: names[train..train + val].to_vec(),
        test: names[train + val..].to_vec(),
    }
}

pub fn synth(a: SynthArgs) -> Result<()> {
    if a.cycles == 0 {
        bail!("--cycles must be at least 1");
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut seeds = Rng::stream(a.seed, Purpose::Custom(0x5e7d));
    let mut entries = Vec::new();
    for i in 0..a.cycles {
        let mut cfg = SynthConfig {
            cycle_name: format!("SYN{i:02}"),
            profile: if i % 2 == 0 { ProfileStyle::Urban } else { ProfileStyle::Highway },
            ambient_temp_c: a.ambient_c,
            ..Default::default()
        };
        if let Some(d) = a.duration_s {
            cfg.max_duration_s = d;
        }
        if let Some(c) = a.mean_current {
            cfg.mean_current_a = c;
        }
        let rec = synth_drive_cycle(&cfg, seeds.next_u64())?;
        let meta = rec.meta();
        let file = meta.file_name();
        let path = a.out.join(&file);
        rec.save(&path)?;
        println!("{} ({} samples)", path.display(), rec.len());
        entries.push(ManifestEntry { file: file.into(), cycle_name: meta.cycle_name, ambient_temp_c: meta.ambient_temp_c });
    }
    let names: Vec<String> = entries.iter().map(|e| e.cycle_name.clone()).collect();
    let manifest = DataManifest { cycles: entries, split: synth_split(&names) };
    manifest.save(&a.out)?;
    println!("{}", a.out.join(c2l_core::data::MANIFEST_FILE).display());
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    require_file(&a.input, "input")?;
    let (model, scaler) = load_model(&a.checkpoint, &a.scaler)?;
    let cfg = model.config().clone();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.input)
        .with_context(|| format!("opening {}", a.input.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| InputError(format!("{}: missing column `{name}`", a.input.display())))
    };
    let cols = [col("current_a")?, col("voltage_v")?, col("temperature_c")?];

    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut buf: VecDeque<[f64; 3]> = VecDeque::with_capacity(cfg.window_len);
    let mut rng = Rng::new(0);
    for (i, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", a.input.display(), i + 1))?;
        let mut sample = [0.0; 3];
        for (s, &c) in sample.iter_mut().zip(&cols) {
            let field = row.get(c).unwrap_or("");
            *s = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .with_context(|| format!("{}: row {}: bad value {field:?}", a.input.display(), i + 1))?;
        }
        if buf.len() == cfg.window_len {
            buf.pop_front();
        }
        buf.push_back(scaler.scale_sample(sample));
        if buf.len() == cfg.window_len {
            let data: Vec<f64> = buf.iter().flatten().copied().collect();
            let window = Matrix::from_vec(cfg.window_len, cfg.channels, data)?;
            writeln!(out, "{}", model.forward(&window, Mode::Eval, &mut rng)?)?;
        }
    }
    out.flush()?;
    Ok(())
}
