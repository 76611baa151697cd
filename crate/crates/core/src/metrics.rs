//! Ensemble MSE and average noise reduction (ANR).
//!
//! `ANR(n) = 20·log10(A_e(n) / A_d(n))`, where `A_e` and `A_d` are
//! exponentially smoothed magnitudes of the residual and of the disturbance:
//! `A(n) = θ·A(n−1) + (1−θ)·|·|`, `A(0) = 0`.

use crate::error::{Error, Result};

/// Forgetting factor of the ANR smoothers.
pub const DEFAULT_THETA: f64 = 0.99;

/// Smoother values below this are treated as zero.
pub const ANR_FLOOR: f64 = 1e-30;

/// A named per-iteration series in dB. `None` marks an undefined entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub name: String,
    pub values_db: Vec<Option<f64>>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>, values_db: Vec<Option<f64>>) -> Self {
        Self {
            name: name.into(),
            values_db,
        }
    }

    pub fn iterations(&self) -> usize {
        self.values_db.len()
    }

    /// Mean of the defined values in the last `fraction` of the series.
    pub fn plateau(&self, fraction: f64) -> Option<f64> {
        let n = self.values_db.len();
        let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
        mean_defined(&self.values_db[n.saturating_sub(k)..])
    }

    pub fn at(&self, n: usize) -> Option<f64> {
        self.values_db.get(n).copied().flatten()
    }
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let (sum, count) = values
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn to_db_power(p: f64) -> Option<f64> {
    (p > 0.0 && p.is_finite()).then(|| 10.0 * p.log10())
}

/// `10·log10(mean_trials e²(n))` for each iteration.
pub fn ensemble_mse<T: AsRef<[f64]>>(error_traces: &[T]) -> Result<MetricSeries> {
    let mut acc = MseAccumulator::default();
    for t in error_traces {
        acc.add(t.as_ref())?;
    }
    acc.finish("MSE")
}

/// Per-trial ANR curve.
pub fn anr_series(e: &[f64], d: &[f64], theta: f64) -> Result<MetricSeries> {
    if e.len() != d.len() {
        return Err(Error::config(format!(
            "error trace length {} differs from disturbance length {}",
            e.len(),
            d.len()
        )));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::config(format!("theta = {theta} not in (0, 1)")));
    }
    let mut a_e = 0.0;
    let mut a_d = 0.0;
    let values = e
        .iter()
        .zip(d)
        .map(|(&en, &dn)| {
            a_e = theta * a_e + (1.0 - theta) * en.abs();
            a_d = theta * a_d + (1.0 - theta) * dn.abs();
            anr_db(a_e, a_d)
        })
        .collect();
    Ok(MetricSeries::new("ANR", values))
}

fn anr_db(a_e: f64, a_d: f64) -> Option<f64> {
    if a_d < ANR_FLOOR || a_e < ANR_FLOOR || !a_e.is_finite() || !a_d.is_finite() {
        None
    } else {
        Some(20.0 * (a_e / a_d).log10())
    }
}

/// Streaming reduction behind [`ensemble_mse`]: sums `e²` over trials.
#[derive(Debug, Clone, Default)]
pub struct MseAccumulator {
    sum_sq: Vec<f64>,
    trials: usize,
}

impl MseAccumulator {
    pub fn add(&mut self, e: &[f64]) -> Result<()> {
        if self.trials == 0 {
            self.sum_sq = vec![0.0; e.len()];
        } else if e.len() != self.sum_sq.len() {
            return Err(Error::config(format!(
                "trace length {} differs from {}",
                e.len(),
                self.sum_sq.len()
            )));
        }
        for (s, x) in self.sum_sq.iter_mut().zip(e) {
            *s += x * x;
        }
        self.trials += 1;
        Ok(())
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    /// Mean square per iteration (linear scale).
    pub fn mean_square(&self) -> Vec<f64> {
        let n = self.trials.max(1) as f64;
        self.sum_sq.iter().map(|s| s / n).collect()
    }

    pub fn finish(&self, name: &str) -> Result<MetricSeries> {
        if self.trials == 0 {
            return Err(Error::config("ensemble needs at least one trial"));
        }
        Ok(MetricSeries::new(
            name,
            self.mean_square().into_iter().map(to_db_power).collect(),
        ))
    }
}

/// Averages per-trial ANR curves in dB. An iteration's ensemble value is the
/// mean over the trials where it is defined.
#[derive(Debug, Clone, Default)]
pub struct AnrAccumulator {
    sum_db: Vec<f64>,
    count: Vec<u32>,
    trials: usize,
}

impl AnrAccumulator {
    pub fn add(&mut self, series: &MetricSeries) -> Result<()> {
        if self.trials == 0 {
            self.sum_db = vec![0.0; series.iterations()];
            self.count = vec![0; series.iterations()];
        } else if series.iterations() != self.sum_db.len() {
            return Err(Error::config(format!(
                "ANR length {} differs from {}",
                series.iterations(),
                self.sum_db.len()
            )));
        }
        for ((s, c), v) in self
            .sum_db
            .iter_mut()
            .zip(&mut self.count)
            .zip(&series.values_db)
        {
            if let Some(v) = v {
                *s += v;
                *c += 1;
            }
        }
        self.trials += 1;
        Ok(())
    }

    pub fn finish(&self, name: &str) -> Result<MetricSeries> {
        if self.trials == 0 {
            return Err(Error::config("ensemble needs at least one trial"));
        }
        Ok(MetricSeries::new(
            name,
            self.sum_db
                .iter()
                .zip(&self.count)
                .map(|(s, &c)| (c > 0).then(|| s / c as f64))
                .collect(),
        ))
    }
}
