use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Error statistics in percent SOC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub max: f64,
    pub count: usize,
}

/// MAE, RMSE and MAX of `preds − targets`, ×100.
pub fn compute_metrics(preds: &[f64], targets: &[f64]) -> Result<Metrics> {
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!("{} predictions against {} targets", preds.len(), targets.len())));
    }
    if preds.is_empty() {
        return Err(Error::InsufficientData("no predictions to score".into()));
    }
    let n = preds.len() as f64;
    let (mut abs, mut sq, mut max) = (0.0, 0.0, 0.0f64);
    for (p, t) in preds.iter().zip(targets) {
        let e = (p - t).abs();
        abs += e;
        sq += e * e;
        max = max.max(e);
    }
    Ok(Metrics { mae: 100.0 * abs / n, rmse: 100.0 * (sq / n).sqrt(), max: 100.0 * max, count: preds.len() })
}

/// Per-cycle rows plus their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cycles: Vec<(String, Metrics)>,
}

impl MetricsReport {
    pub fn average(&self) -> Option<Metrics> {
        let n = self.cycles.len();
        if n == 0 {
            return None;
        }
        let sum = |f: fn(&Metrics) -> f64| self.cycles.iter().map(|(_, m)| f(m)).sum::<f64>() / n as f64;
        Some(Metrics {
            mae: sum(|m| m.mae),
            rmse: sum(|m| m.rmse),
            max: sum(|m| m.max),
            count: self.cycles.iter().map(|(_, m)| m.count).sum(),
        })
    }

    /// Mean of each (cycle, metric) over several runs on the same cycles.
    pub fn mean_of(runs: &[MetricsReport]) -> Result<MetricsReport> {
        let Some(first) = runs.first() else {
            return Err(Error::InsufficientData("no runs to average".into()));
        };
        let k = runs.len() as f64;
        let mut cycles = Vec::with_capacity(first.cycles.len());
        for (i, (name, _)) in first.cycles.iter().enumerate() {
            let mut acc = Metrics { mae: 0.0, rmse: 0.0, max: 0.0, count: 0 };
            for run in runs {
                let Some((other, m)) = run.cycles.get(i).filter(|(n, _)| n == name) else {
                    return Err(Error::Contract(format!("runs disagree on cycle order at {name}")));
                };
                debug_assert_eq!(other, name);
                acc.mae += m.mae / k;
                acc.rmse += m.rmse / k;
                acc.max += m.max / k;
                acc.count = m.count;
            }
            cycles.push((name.clone(), acc));
        }
        Ok(MetricsReport { cycles })
    }

    /// Fixed-width table with four decimals and a trailing average row.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<16} {:>10} {:>10} {:>10} {:>9}\n", "cycle", "MAE %", "RMSE %", "MAX %", "n");
        let mut row = |name: &str, m: &Metrics| {
            let _ = writeln!(s, "{name:<16} {:>10.4} {:>10.4} {:>10.4} {:>9}", m.mae, m.rmse, m.max, m.count);
        };
        for (name, m) in &self.cycles {
            row(name, m);
        }
        if let Some(avg) = self.average() {
            row("average", &avg);
        }
        s
    }

    /// `cycle.metric = value` lines.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let mut put = |name: &str, m: &Metrics| {
            let _ = writeln!(s, "{name}.mae_pct = {}", m.mae);
            let _ = writeln!(s, "{name}.rmse_pct = {}", m.rmse);
            let _ = writeln!(s, "{name}.max_pct = {}", m.max);
            let _ = writeln!(s, "{name}.count = {}", m.count);
        };
        for (name, m) in &self.cycles {
            put(name, m);
        }
        if let Some(avg) = self.average() {
            put("average", &avg);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let m = compute_metrics(&[0.9, 0.7], &[1.0, 0.5]).unwrap();
        assert!((m.mae - 15.0).abs() < 1e-9);
        assert!((m.rmse - 100.0 * 0.025f64.sqrt()).abs() < 1e-9);
        assert!((m.rmse - 15.8114).abs() < 1e-4);
        assert!((m.max - 20.0).abs() < 1e-9);
        assert_eq!(m.count, 2);
    }

    #[test]
    fn perfect_and_invalid() {
        let m = compute_metrics(&[0.3, 0.4], &[0.3, 0.4]).unwrap();
        assert_eq!((m.mae, m.rmse, m.max), (0.0, 0.0, 0.0));
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn averaging() {
        let a = MetricsReport {
            cycles: vec![
                ("A".into(), Metrics { mae: 1.0, rmse: 2.0, max: 3.0, count: 10 }),
                ("B".into(), Metrics { mae: 3.0, rmse: 4.0, max: 5.0, count: 20 }),
            ],
        };
        let avg = a.average().unwrap();
        assert_eq!((avg.mae, avg.rmse, avg.max, avg.count), (2.0, 3.0, 4.0, 30));
        assert_eq!(MetricsReport::mean_of(&[a.clone(), a.clone(), a.clone()]).unwrap(), a);
        assert_eq!(MetricsReport::mean_of(std::slice::from_ref(&a)).unwrap(), a);
        let table = a.to_table();
        assert!(table.contains("average") && table.contains("2.0000"), "{table}");
        assert!(a.to_key_values().contains("B.rmse_pct = 4"));
    }
}
