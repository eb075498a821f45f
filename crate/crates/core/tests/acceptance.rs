//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p c2l-core --test acceptance` runs everything; pass criterion
//! numbers after `--` to run a subset.

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use c2l_core::data::{
    apply_scaler, fit_scaler, make_windows, split_cycles, synth_drive_cycle, DriveCycleRecord, ProfileStyle,
    SplitCatalog, SynthConfig, WindowDataset,
};
use c2l_core::encoder::{causal_cosine_attention, gru_forward};
use c2l_core::eval::{benchmark_latency, compute_metrics, evaluate_cycle, evaluate_scaled};
use c2l_core::model::{forward_graph, storage_mib, Checkpoint, Precision};
use c2l_core::numeric::{finite_difference_check, Purpose};
use c2l_core::train::{adamw_step, mse_loss, mse_loss_graph, train, OptimState, Trainer};
use c2l_core::{Graph, Matrix, Mode, Model, ModelConfig, Rng, TrainConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(Config { cases, ..Config::default() }, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn random_window(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len * 3).map(|_| rng.uniform()).collect()
}

fn truncate(r: &DriveCycleRecord, n: usize) -> DriveCycleRecord {
    let mut r = r.clone();
    for v in [&mut r.time_s, &mut r.current_a, &mut r.voltage_v, &mut r.temperature_c, &mut r.soc] {
        v.truncate(n);
    }
    r
}

/// 32 windows spread evenly over one synthetic urban cycle.
fn memorization_set() -> WindowDataset {
    let cfg = SynthConfig { cycle_name: "MEM".into(), profile: ProfileStyle::Urban, ..Default::default() };
    let rec = synth_drive_cycle(&cfg, 7).unwrap();
    let stride = (rec.len() - 200) / 31;
    let rec = truncate(&rec, 200 + 31 * stride);
    let scaler = fit_scaler(std::slice::from_ref(&rec)).unwrap();
    let ds = WindowDataset::new(vec![apply_scaler(&rec, &scaler)], 200, stride).unwrap();
    assert_eq!(ds.len(), 32);
    ds
}

fn batch_of(ds: &WindowDataset) -> (Vec<&[f64]>, Vec<f64>) {
    ds.iter().map(|w| (w.rows(), w.target_soc())).unzip()
}

fn c1_param_count() -> Outcome {
    let n = Model::new(ModelConfig::default()).map_err(|e| e.to_string())?.count_params();
    check(n == 161_347, format!("count_params = {n} (want 161347)"))
}

fn c2_shape_trace() -> Outcome {
    let trace = Model::new(ModelConfig::default()).map_err(|e| e.to_string())?.shape_trace(2).map_err(|e| e.to_string())?;
    let want: Vec<Vec<usize>> = vec![
        vec![2, 200, 3],
        vec![2, 5, 40, 3],
        vec![2, 5, 21],
        vec![2, 5, 1],
        vec![2, 5, 3],
        vec![2, 5, 128],
        vec![2, 5, 128],
        vec![2, 128],
        vec![2, 128],
        vec![2, 1],
    ];
    let got: Vec<Vec<usize>> = trace.0.iter().map(|(_, s)| s.clone()).collect();
    let text = got.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join("->");
    check(got == want, text)
}

fn c3_causality() -> Outcome {
    let mut rng = Rng::stream(3, Purpose::Custom(3));
    let widths = [4, 8, 16, 32, 64, 128];
    let (mut masked, mut perturbed, mut prefixes) = (0usize, 0usize, 0usize);
    for pair in 0..100u64 {
        let cfg = ModelConfig { hidden: widths[rng.below(widths.len())], seed: rng.next_u64(), ..Default::default() };
        let model = Model::new(cfg.clone()).unwrap();
        let window = random_window(&mut rng, cfg.window_len);

        let mut g = Graph::new();
        let (p, basis) = model.bind(&mut g, false);
        let out = forward_graph(&mut g, &cfg, &p, basis, &[&window], Mode::Eval, &mut Rng::new(0)).unwrap();
        let n = out.attention.weights.len();
        for (i, &a) in out.attention.weights.iter().enumerate() {
            let row = g.value(a).row(0);
            if row[i + 1..].iter().any(|&w| w != 0.0) {
                return Err(format!("pair {pair}: row {i} attends to the future: {row:?}"));
            }
            masked += n - i - 1;
        }

        let z = Matrix::from_rows(&out.extract.steps.iter().map(|&s| g.value(s).row(0)).collect::<Vec<_>>());
        let h = gru_forward(&z, &p_encoder(&model)).unwrap();
        let (_, ctx) = causal_cosine_attention(&h, Default::default()).unwrap();
        for j in 1..n {
            let mut z2 = z.clone();
            for c in 0..3 {
                z2.set(j, c, z.get(j, c) + rng.uniform_in(-1.0, 1.0));
            }
            let h2 = gru_forward(&z2, &p_encoder(&model)).unwrap();
            let (_, ctx2) = causal_cosine_attention(&h2, Default::default()).unwrap();
            for i in 0..j {
                if h.row(i) != h2.row(i) || ctx.row(i) != ctx2.row(i) {
                    return Err(format!("pair {pair}: perturbing token {j} changed step {i}"));
                }
                perturbed += 1;
            }
        }

        let synth = SynthConfig { cycle_name: "P".into(), max_duration_s: 30.0, ..Default::default() };
        let cycle = synth_drive_cycle(&synth, pair).unwrap();
        let scaler = fit_scaler(std::slice::from_ref(&cycle)).unwrap();
        let cut = cfg.window_len + rng.below(cycle.len() - cfg.window_len);
        let (full, _) = evaluate_cycle(&model, &cycle, &scaler).unwrap();
        let (part, _) = evaluate_cycle(&model, &truncate(&cycle, cut), &scaler).unwrap();
        if part.points.len() != cut - cfg.window_len + 1 || full.points[..part.points.len()] != part.points[..] {
            return Err(format!("pair {pair}: prefix of {cut} samples disagrees with the full cycle"));
        }
        prefixes += part.points.len();
    }
    Ok(format!(
        "100 pairs: {masked} masked weights exactly 0, {perturbed} earlier steps bit-identical, {prefixes} prefix predictions equal"
    ))
}

fn p_encoder(m: &Model) -> c2l_core::model::GruParams {
    m.params().encoder.clone()
}

fn c4_gradient() -> Outcome {
    let cfg = ModelConfig { window_len: 40, chunks: 5, hidden: 8, harmonics: 2, seed: 21, ..Default::default() };
    let model = Model::new(cfg.clone()).unwrap();
    let mut rng = Rng::stream(4, Purpose::Data);
    let windows: Vec<Vec<f64>> = (0..3).map(|_| random_window(&mut rng, 40)).collect();
    let targets: Vec<f64> = (0..3).map(|_| rng.uniform()).collect();
    let refs: Vec<&[f64]> = windows.iter().map(|w| w.as_slice()).collect();
    let leaves: Vec<Matrix> = model.params().leaves().into_iter().cloned().collect();
    let report = finite_difference_check(
        |g: &mut Graph, vars| {
            let params = model.params().with_leaves(vars);
            let basis = g.constant(model.basis().matrix().clone());
            let out = forward_graph(g, &cfg, &params, basis, &refs, Mode::Eval, &mut Rng::new(0))?;
            mse_loss_graph(g, out.soc, &targets)
        },
        &leaves,
        1e-5,
    )
    .map_err(|e| e.to_string())?;
    check(
        report.max_rel_error < 1e-4 && report.coordinates == model.count_params(),
        format!("max relative error {:.3e} over {} parameters (limit 1e-4)", report.max_rel_error, report.coordinates),
    )
}

fn c5_range_and_determinism() -> Outcome {
    let mut rng = Rng::stream(5, Purpose::Custom(5));
    let (mut lo, mut hi, mut count) = (1.0f64, 0.0f64, 0usize);
    for seed in 0..10 {
        let model = Model::new(ModelConfig { seed, ..Default::default() }).unwrap();
        for _ in 0..40 {
            let windows: Vec<Vec<f64>> =
                (0..250).map(|_| (0..600).map(|_| rng.uniform_in(-0.5, 1.5)).collect()).collect();
            let refs: Vec<&[f64]> = windows.iter().map(|w| w.as_slice()).collect();
            for s in model.predict_batch(&refs).unwrap() {
                if !(s > 0.0 && s < 1.0) {
                    return Err(format!("prediction {s} outside (0, 1)"));
                }
                lo = lo.min(s);
                hi = hi.max(s);
                count += 1;
            }
        }
    }

    let ds = memorization_set();
    let cfg = TrainConfig { epochs: 15, batch_size: 8, ..Default::default() };
    let run = || {
        let mut m = Model::new(ModelConfig { seed: 11, ..Default::default() }).unwrap();
        train(&mut m, &ds, None, &cfg, 3, &mut |_| {}).unwrap();
        Checkpoint::new(m.config().clone(), m.params().clone()).to_bytes(Precision::F64)
    };
    let (a, b) = (run(), run());
    check(
        count == 100_000 && a == b,
        format!(
            "{count} eval forwards in [{lo:.4}, {hi:.4}]; two 60-step training runs give {} checkpoint bytes, identical: {}",
            a.len(),
            a == b
        ),
    )
}

fn c6_optimizer() -> Outcome {
    let cfg = TrainConfig::default();
    let (theta, grad) = (0.8, 0.5);
    let mut p = Matrix::scalar(theta);
    let mut state = OptimState::new([&p]);
    adamw_step(&mut [&mut p], &[Matrix::scalar(grad)], &mut state, &cfg).unwrap();
    let lr = cfg.learning_rate;
    let want = theta * (1.0 - lr * cfg.weight_decay) - lr * grad / (grad.abs() + cfg.eps);
    let first = (p.item() - want).abs();

    let ratio = 1.0 - lr * cfg.weight_decay;
    let mut q = Matrix::scalar(2.0);
    let mut state = OptimState::new([&q]);
    let mut geometric = true;
    for _ in 0..100 {
        let before = q.item();
        adamw_step(&mut [&mut q], &[Matrix::scalar(0.0)], &mut state, &cfg).unwrap();
        geometric &= q.item() == before * ratio;
    }
    check(first < 1e-12 && geometric, format!("first step |error| {first:.1e} (limit 1e-12); 100 zero-gradient steps exactly geometric: {geometric}"))
}

fn c7_overfit() -> Outcome {
    let ds = memorization_set();
    let (windows, targets) = batch_of(&ds);
    let mut model = Model::new(ModelConfig::default()).unwrap();
    let mut trainer = Trainer::new(&mut model, TrainConfig::default(), 0).unwrap();
    let start = Instant::now();
    let mut last = f64::NAN;
    for step in 1..=2000 {
        trainer.step(&windows, &targets).map_err(|e| e.to_string())?;
        if step % 25 == 0 {
            let preds = trainer.model().predict_batch(&windows).unwrap();
            last = mse_loss(&preds, &targets).unwrap();
            if last < 1e-4 {
                return Ok(format!("training MSE {last:.3e} < 1e-4 after {step} steps ({:.1} s)", start.elapsed().as_secs_f64()));
            }
        }
    }
    Err(format!("training MSE {last:.3e} after 2000 steps"))
}

fn c8_desk_scale() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let start = Instant::now();
        let cycle = |style, seed, name: &str| {
            let cfg = SynthConfig { cycle_name: name.into(), profile: style, ..Default::default() };
            synth_drive_cycle(&cfg, seed).unwrap()
        };
        let mut train_cycles = Vec::new();
        for (i, style) in [ProfileStyle::Urban, ProfileStyle::Highway].into_iter().enumerate() {
            for s in 0..3u64 {
                train_cycles.push(cycle(style, 10 + s + 10 * i as u64, &format!("T{i}{s}")));
            }
        }
        let held_out = [cycle(ProfileStyle::Urban, 100, "URBAN"), cycle(ProfileStyle::Highway, 101, "HIGHWAY")];
        let scaler = fit_scaler(&train_cycles).unwrap();
        let ds = WindowDataset::new(train_cycles.iter().map(|r| apply_scaler(r, &scaler)).collect(), 200, 10).unwrap();
        let cfg = TrainConfig { epochs: 50, select_best: false, ..Default::default() };
        let mut model = Model::new(ModelConfig::default()).unwrap();
        train(&mut model, &ds, None, &cfg, 0, &mut |_| {}).map_err(|e| e.to_string())?;
        let mut ok = true;
        let mut parts = Vec::new();
        for rec in &held_out {
            let (_, m) = evaluate_scaled(&model, &apply_scaler(rec, &scaler)).unwrap();
            ok &= m.mae < 2.0 && m.rmse < 3.0;
            parts.push(format!("{} MAE {:.3}% RMSE {:.3}%", rec.cycle_name, m.mae, m.rmse));
        }
        let secs = start.elapsed().as_secs_f64();
        ok &= secs < 600.0;
        check(ok, format!("{}; {} windows, 50 epochs, {secs:.0} s single-threaded", parts.join(", "), ds.len()))
    })
}

fn c9_efficiency() -> Outcome {
    let model = Model::new(ModelConfig::default()).unwrap();
    let r = benchmark_latency(&model, 1000, 50).map_err(|e| e.to_string())?;
    let mib = storage_mib(model.count_params(), Precision::F32);
    let rel = (mib - 0.62).abs() / 0.62;
    check(
        r.mean_ms < 2.0 && r.throughput > 500.0 && rel < 0.01,
        format!(
            "mean {:.3} ms, p50 {:.3} ms, {:.0} inf/s ({}); 32-bit storage {mib:.4} MiB ({:.2}% from 0.62)",
            r.mean_ms,
            r.p50_ms,
            r.throughput,
            r.hardware,
            100.0 * rel
        ),
    )
}

fn arb_record(name: &'static str) -> impl Strategy<Value = DriveCycleRecord> {
    (1usize..60, any::<u64>()).prop_map(move |(len, seed)| {
        let mut rng = Rng::new(seed);
        let mut col = |lo: f64, hi: f64| (0..len).map(|_| rng.uniform_in(lo, hi)).collect::<Vec<_>>();
        DriveCycleRecord {
            cycle_name: name.into(),
            ambient_temp_c: 25.0,
            sample_period_s: 0.1,
            time_s: (0..len).map(|k| k as f64 * 0.1).collect(),
            current_a: col(-50.0, 20.0),
            voltage_v: col(2.5, 4.2),
            temperature_c: col(-20.0, 60.0),
            soc: col(0.0, 1.0),
        }
    })
}

fn c10_leakage() -> Outcome {
    let catalog = SplitCatalog {
        train: vec!["A".into(), "B".into()],
        val: vec!["V".into()],
        test: vec!["T".into()],
    };
    let strategy = (arb_record("A"), arb_record("B"), arb_record("V"), arb_record("T"), arb_record("V"), arb_record("T"));
    let cases = Cell::new(0usize);
    runner(256)
        .run(&strategy, |(a, b, v1, t1, v2, t2)| {
            let one = split_cycles(&catalog, vec![a.clone(), v1, b.clone(), t1]).unwrap();
            let two = split_cycles(&catalog, vec![t2, a, v2, b]).unwrap();
            prop_assert_eq!(fit_scaler(&one.train).unwrap(), fit_scaler(&two.train).unwrap());
            cases.set(cases.get() + 1);
            Ok(())
        })
        .map_err(|e| format!("scaler invariance: {e}"))?;

    let windows = Cell::new(0usize);
    let strategy = (arb_record("W"), 1usize..30, 1usize..7);
    runner(256)
        .run(&strategy, |(rec, len, stride)| {
            let scaler = fit_scaler(std::slice::from_ref(&rec)).unwrap();
            let scaled = apply_scaler(&rec, &scaler);
            let Ok(ws) = make_windows(&scaled, len, stride) else {
                prop_assert!(rec.len() < len);
                return Ok(());
            };
            prop_assert_eq!(ws.len(), (rec.len() - len) / stride + 1);
            for w in &ws {
                prop_assert_eq!(w.len(), len);
                for row in 0..len {
                    let src = w.source_index(row);
                    prop_assert!(src < rec.len());
                    prop_assert_eq!(&w.rows()[row * 3..row * 3 + 3], scaled.features.row(src));
                }
                prop_assert_eq!(w.target_soc(), rec.soc[w.end()]);
                windows.set(windows.get() + 1);
            }
            Ok(())
        })
        .map_err(|e| format!("window provenance: {e}"))?;
    Ok(format!("scaler unchanged across {} val/test mutations; every row of {} windows maps to a source sample", cases.get(), windows.get()))
}

fn c11_metrics() -> Outcome {
    let m = compute_metrics(&[0.9, 0.7], &[1.0, 0.5]).map_err(|e| e.to_string())?;
    let rmse = 250f64.sqrt();
    let hand = (m.mae - 15.0).abs() < 1e-9
        && (m.rmse - rmse).abs() < 1e-9
        && (m.rmse - 15.8114).abs() < 5e-5
        && (m.max - 20.0).abs() < 1e-9;
    if !hand {
        return Err(format!("hand example gave MAE {} RMSE {} MAX {}", m.mae, m.rmse, m.max));
    }
    let cases = Cell::new(0usize);
    runner(1000)
        .run(&proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..200), |pairs| {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = compute_metrics(&p, &t).unwrap();
            prop_assert!(m.rmse >= m.mae && m.max >= m.mae, "{:?}", m);
            cases.set(cases.get() + 1);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("MAE {:.9}% RMSE {:.9}% MAX {:.9}%; RMSE >= MAE and MAX >= MAE on {} random evaluations", m.mae, m.rmse, m.max, cases.get()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("parameter count", c1_param_count),
        ("shape trace", c2_shape_trace),
        ("causality", c3_causality),
        ("gradient oracle", c4_gradient),
        ("output range and determinism", c5_range_and_determinism),
        ("optimizer oracle", c6_optimizer),
        ("overfit sanity", c7_overfit),
        ("desk-scale end-to-end", c8_desk_scale),
        ("efficiency", c9_efficiency),
        ("leakage guard", c10_leakage),
        ("metric identities", c11_metrics),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {n:>2}. {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                println!("FAIL  {n:>2}. {name}: {detail} [{secs:.1} s]");
                failed.push(n);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
