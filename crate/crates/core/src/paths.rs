//! Acoustic plant: primary and secondary paths, the filtered reference, and
//! offline LMS identification of the secondary path.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::signal::{convolve_stream, DelayLine, FirFilter, TapVector};

/// Taps of `P(z) = 0.25z⁻² + 0.5z⁻³ + z⁻⁴ + 0.5z⁻⁵ + 0.25z⁻⁶`.
pub fn primary_taps() -> TapVector {
    TapVector::new(vec![0.0, 0.0, 0.25, 0.5, 1.0, 0.5, 0.25]).expect("static taps")
}

/// Taps of `S(z) = 0.5·P(z)`.
pub fn secondary_taps() -> TapVector {
    primary_taps().scaled(0.5)
}

/// FIR impulse response of an acoustic path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathModel {
    pub impulse_response: TapVector,
}

impl PathModel {
    pub fn new(impulse_response: TapVector) -> Self {
        Self { impulse_response }
    }

    pub fn from_taps(taps: Vec<f64>) -> Result<Self> {
        Ok(Self::new(TapVector::new(taps)?))
    }

    pub fn len(&self) -> usize {
        self.impulse_response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.impulse_response.is_empty()
    }

    pub fn taps(&self) -> &[f64] {
        self.impulse_response.as_slice()
    }

    /// `‖self − reference‖² / ‖reference‖²`, zero-padding the shorter one.
    pub fn misalignment(&self, reference: &PathModel) -> f64 {
        let a = self.taps();
        let b = reference.taps();
        let n = a.len().max(b.len());
        let num: f64 = (0..n)
            .map(|i| {
                let d = a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0);
                d * d
            })
            .sum();
        num / reference.impulse_response.norm_sq()
    }

    /// Plain-text form: one coefficient per line, round-trip exact.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in self.taps() {
            let _ = writeln!(s, "{t:?}");
        }
        s
    }

    /// Parses [`PathModel::to_text`] output. Blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut taps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
            taps.push(v);
        }
        TapVector::new(taps)
            .map(PathModel::new)
            .map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }
}

/// One sample of plant output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantSample {
    /// Disturbance at the error sensor, `(p*x)(n) + v(n)`.
    pub d: f64,
    /// Residual, `d(n) − (s*y)(n)`.
    pub e: f64,
    /// Filtered reference `(ŝ*x)(n)`.
    pub x_filtered: f64,
}

/// Streaming state of the whole acoustic plant.
///
/// The reference filter always runs on the secondary-path *estimate*.
#[derive(Debug, Clone)]
pub struct PlantState {
    pub primary: PathModel,
    pub secondary: PathModel,
    pub secondary_estimate: PathModel,
    primary_filter: FirFilter,
    secondary_filter: FirFilter,
    reference_filter: FirFilter,
}

impl PlantState {
    pub fn new(primary: PathModel, secondary: PathModel, secondary_estimate: PathModel) -> Self {
        let primary_filter = convolve_stream(primary.impulse_response.clone());
        let secondary_filter = convolve_stream(secondary.impulse_response.clone());
        let reference_filter = convolve_stream(secondary_estimate.impulse_response.clone());
        Self {
            primary,
            secondary,
            secondary_estimate,
            primary_filter,
            secondary_filter,
            reference_filter,
        }
    }

    /// Advances every path by one sample given reference `x`, measurement
    /// noise `v` and actuator output `y`.
    pub fn step(&mut self, x: f64, v: f64, y: f64) -> PlantSample {
        let d = self.primary_filter.process(x) + v;
        let e = d - self.secondary_filter.process(y);
        let x_filtered = self.reference_filter.process(x);
        PlantSample { d, e, x_filtered }
    }

    pub fn reset(&mut self) {
        self.primary_filter.reset();
        self.secondary_filter.reset();
        self.reference_filter.reset();
    }
}

/// Free-function form of [`PlantState::step`].
pub fn step_plant(plant: &mut PlantState, x: f64, v: f64, y: f64) -> PlantSample {
    plant.step(x, v, y)
}

/// Settings for offline secondary-path identification.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationSettings {
    pub probe_len: usize,
    pub mu_id: f64,
    pub model_len: usize,
    /// Standard deviation of sensor noise added during identification.
    #[serde(default)]
    pub noise_sigma: f64,
}

impl Default for IdentificationSettings {
    fn default() -> Self {
        Self {
            probe_len: 20_000,
            mu_id: 0.01,
            model_len: 7,
            noise_sigma: 0.0,
        }
    }
}

/// Result of [`identify_secondary`].
#[derive(Debug, Clone)]
pub struct Identification {
    pub estimate: PathModel,
    /// Per-sample identification error.
    pub error_trace: Vec<f64>,
}

const ID_DIVERGENCE: f64 = 1e6;

/// LMS identification of `secondary` driven by a unit-variance white
/// Gaussian probe.
pub fn identify_secondary(
    secondary: &PathModel,
    settings: &IdentificationSettings,
    seed: u64,
) -> Result<Identification> {
    let IdentificationSettings {
        probe_len,
        mu_id,
        model_len,
        noise_sigma,
    } = *settings;
    if !(mu_id > 0.0 && mu_id.is_finite()) {
        return Err(Error::config(format!("mu_id = {mu_id} must be > 0")));
    }
    if model_len < secondary.len() {
        return Err(Error::config(format!(
            "model_len {model_len} shorter than secondary path ({})",
            secondary.len()
        )));
    }
    if probe_len == 0 {
        return Err(Error::config("probe_len must be at least 1"));
    }
    if noise_sigma.is_nan() || noise_sigma < 0.0 {
        return Err(Error::config("identification noise sigma must be >= 0"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(crate::noise::derive_seed(seed, 1));
    let mut path = convolve_stream(secondary.impulse_response.clone());
    let mut line = DelayLine::new(model_len)?;
    let mut w = vec![0.0; model_len];
    let mut error_trace = Vec::with_capacity(probe_len);

    for n in 0..probe_len {
        let u: f64 = StandardNormal.sample(&mut rng);
        let z: f64 = StandardNormal.sample(&mut noise_rng);
        let target = path.process(u) + noise_sigma * z;
        line.push(u);
        let y = crate::signal::dot(&w, line.as_slice());
        let err = target - y;
        if !err.is_finite() || err.abs() > ID_DIVERGENCE {
            return Err(Error::Identification(format!(
                "error magnitude {err:e} at sample {n} (mu_id = {mu_id})"
            )));
        }
        for (wk, xk) in w.iter_mut().zip(line.as_slice()) {
            *wk += mu_id * err * xk;
        }
        error_trace.push(err);
    }

    Ok(Identification {
        estimate: PathModel::new(TapVector::new(w)?),
        error_trace,
    })
}
