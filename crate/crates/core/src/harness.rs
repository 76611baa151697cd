//! Monte Carlo experiment harness.
//!
//! An [`ExperimentConfig`] (TOML on disk) fully determines an
//! [`ExperimentResult`]: the secondary path is identified once, then each
//! trial draws its own reference and measurement noise from seeds derived
//! from `seed_base ^ trial` and runs every configured algorithm on the same
//! realization. Trials run in parallel and are reduced in trial order, so
//! the output does not depend on the worker count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    run_controller, AlgorithmKind, AlgorithmParams, Controller, HekmParams, Trace,
};
use crate::analysis::{covariance_from_stream, estimate_phi_bar, estimate_phi_gain, TheoryReport};
use crate::error::{Error, Result};
use crate::metrics::{anr_series, AnrAccumulator, MetricSeries, MseAccumulator, DEFAULT_THETA};
use crate::noise::{derive_seed, sample_alpha_stable, sample_gaussian, NoiseSpec};
use crate::paths::{
    identify_secondary, primary_taps, secondary_taps, IdentificationSettings, PathModel, PlantState,
};
use crate::signal::{convolve_stream, TapVector};

/// Fraction of the curve averaged for a steady-state plateau.
pub const PLATEAU_FRACTION: f64 = 0.1;
/// Fraction of the recorded reference used for the covariance estimate.
pub const COVARIANCE_TAIL: f64 = 0.25;

const STREAM_REFERENCE: u64 = 0;
const STREAM_MEASUREMENT: u64 = 1;
/// Sub-stream of `seed_base` used for secondary-path identification.
pub const IDENT_STREAM: u64 = 0x0049_4445_4e54;

/// α-stable law of the reference noise (seed is derived per trial).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub alpha_s: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub delta: f64,
    /// Amplitude post-multiplier.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl NoiseConfig {
    pub fn spec(&self, seed: u64) -> Result<NoiseSpec> {
        NoiseSpec::new(
            self.alpha_s,
            self.beta,
            self.gamma,
            self.delta,
            self.scale,
            seed,
        )
    }
}

/// Acoustic paths and how the secondary-path estimate is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub primary: Vec<f64>,
    pub secondary: Vec<f64>,
    /// Load `Ŝ(z)` from this tap file instead of identifying it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_estimate_file: Option<PathBuf>,
    #[serde(default)]
    pub identification: IdentificationSettings,
}

/// How the measurement-noise level `σ_v` is set. At most one field may be given;
/// with none, `σ_v = 0`. The two relative forms are calibrated per trial
/// against the power of that trial's clean disturbance `p*x`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    /// `σ_v` such that `10·log10(P_d/σ_v²) = snr_db`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    /// `σ_v = amplitude_fraction · sqrt(P_d)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_fraction: Option<f64>,
    /// Explicit `σ_v`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_v: Option<f64>,
}

impl MeasurementConfig {
    /// `σ_v` for a clean-disturbance power `p_d`.
    pub fn sigma_v(&self, p_d: f64) -> f64 {
        if let Some(snr) = self.snr_db {
            (p_d / 10f64.powf(snr / 10.0)).sqrt()
        } else if let Some(f) = self.amplitude_fraction {
            f * p_d.sqrt()
        } else {
            self.sigma_v.unwrap_or(0.0)
        }
    }
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    /// Adaptive filter length L.
    pub filter_len: usize,
    pub n_iters: usize,
    pub n_trials: usize,
    pub seed_base: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// ANR forgetting factor.
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    pub paths: PathsConfig,
    pub algorithms: Vec<AlgorithmParams>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_len == 0 {
            return Err(Error::config("filter_len must be at least 1"));
        }
        if self.n_iters == 0 {
            return Err(Error::config("n_iters must be at least 1"));
        }
        if self.n_trials == 0 {
            return Err(Error::config("n_trials must be at least 1"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::config(format!(
                "theta = {} not in (0, 1)",
                self.theta
            )));
        }
        self.noise.spec(0)?;
        TapVector::new(self.paths.primary.clone())?;
        TapVector::new(self.paths.secondary.clone())?;
        let m = &self.measurement;
        let given = [
            m.snr_db.is_some(),
            m.amplitude_fraction.is_some(),
            m.sigma_v.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count();
        if given > 1 {
            return Err(Error::config(
                "set at most one of measurement.snr_db, amplitude_fraction, sigma_v",
            ));
        }
        if let Some(s) = m.sigma_v {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config("measurement.sigma_v must be >= 0"));
            }
        }
        if let Some(f) = m.amplitude_fraction {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(Error::config("measurement.amplitude_fraction must be >= 0"));
            }
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("no algorithms configured"));
        }
        let mut seen = Vec::new();
        for a in &self.algorithms {
            a.validate()?;
            if seen.contains(&a.kind()) {
                return Err(Error::config(format!(
                    "algorithm {} listed twice",
                    a.kind()
                )));
            }
            seen.push(a.kind());
        }
        Ok(())
    }

    /// Seed of trial `t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.seed_base ^ t as u64
    }
}

fn reference_algorithms() -> Vec<AlgorithmParams> {
    AlgorithmKind::ALL
        .iter()
        .map(|&k| AlgorithmParams::reference(k))
        .collect()
}

/// Gaussian reference (α_s = 2), SNR 20 dB, L = 16, 250 trials, every algorithm.
pub fn scenario1() -> ExperimentConfig {
    ExperimentConfig {
        scenario: "scenario1".into(),
        filter_len: 16,
        n_iters: 10_000,
        n_trials: 250,
        seed_base: 2024,
        output_dir: PathBuf::from("out/scenario1"),
        theta: DEFAULT_THETA,
        noise: NoiseConfig {
            alpha_s: 2.0,
            beta: 0.0,
            gamma: 1.0,
            delta: 0.0,
            scale: 0.1,
        },
        measurement: MeasurementConfig {
            snr_db: Some(20.0),
            ..Default::default()
        },
        paths: PathsConfig {
            primary: primary_taps().into_vec(),
            secondary: secondary_taps().into_vec(),
            secondary_estimate_file: None,
            identification: IdentificationSettings::default(),
        },
        algorithms: reference_algorithms(),
    }
}

/// Impulsive reference (α_s = 1.5), target SNR 25 dB, 10⁵ iterations;
/// otherwise as [`scenario1`]. The longer horizon exposes the slow blow-up of
/// unnormalized filtered-x LMS under infinite-variance input.
pub fn scenario2() -> ExperimentConfig {
    let mut cfg = scenario1();
    cfg.scenario = "scenario2".into();
    cfg.n_iters = 100_000;
    cfg.output_dir = PathBuf::from("out/scenario2");
    cfg.noise.alpha_s = 1.5;
    cfg.measurement.snr_db = Some(25.0);
    cfg
}

/// Named preset lookup.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "scenario1" => Ok(scenario1()),
        "scenario2" => Ok(scenario2()),
        other => Err(Error::config(format!("unknown preset `{other}`"))),
    }
}

/// Everything derived once per experiment before trials start.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    pub config: ExperimentConfig,
    pub primary: PathModel,
    pub secondary: PathModel,
    pub secondary_estimate: PathModel,
    /// Normalized misalignment of the estimate, when it was identified here.
    pub identification_misalignment: Option<f64>,
    pub identification_error: Vec<f64>,
}

/// Signals of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialNoise {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Power of the clean disturbance `p*x`.
    pub clean_power: f64,
    pub sigma_v: f64,
    /// Realized power of `v`.
    pub noise_power: f64,
}

impl PreparedExperiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let primary = PathModel::from_taps(config.paths.primary.clone())?;
        let secondary = PathModel::from_taps(config.paths.secondary.clone())?;
        let (secondary_estimate, identification_misalignment, identification_error) =
            match &config.paths.secondary_estimate_file {
                Some(path) => (PathModel::load(path)?, None, Vec::new()),
                None => {
                    let id = identify_secondary(
                        &secondary,
                        &config.paths.identification,
                        derive_seed(config.seed_base, IDENT_STREAM),
                    )?;
                    let mis = id.estimate.misalignment(&secondary);
                    (id.estimate, Some(mis), id.error_trace)
                }
            };

        Ok(Self {
            config: config.clone(),
            primary,
            secondary,
            secondary_estimate,
            identification_misalignment,
            identification_error,
        })
    }

    /// Reference and measurement noise of trial `t`. The reference is drawn
    /// first and doubles as the pilot run that calibrates `σ_v`.
    pub fn trial_noise(&self, t: usize) -> Result<TrialNoise> {
        let seed = self.config.trial_seed(t);
        let x = sample_alpha_stable(
            &self
                .config
                .noise
                .spec(derive_seed(seed, STREAM_REFERENCE))?,
            self.config.n_iters,
        )?;
        let mut p = convolve_stream(self.primary.impulse_response.clone());
        let clean_power = x.iter().map(|&u| p.process(u).powi(2)).sum::<f64>() / x.len() as f64;
        let sigma_v = self.config.measurement.sigma_v(clean_power);
        let v = sample_gaussian(
            sigma_v,
            self.config.n_iters,
            derive_seed(seed, STREAM_MEASUREMENT),
        )?;
        let noise_power = v.iter().map(|u| u * u).sum::<f64>() / v.len() as f64;
        Ok(TrialNoise {
            x,
            v,
            clean_power,
            sigma_v,
            noise_power,
        })
    }

    pub fn plant(&self) -> PlantState {
        PlantState::new(
            self.primary.clone(),
            self.secondary.clone(),
            self.secondary_estimate.clone(),
        )
    }

    /// Runs one algorithm on trial `t` and returns the full trace.
    pub fn run_trace(&self, params: &AlgorithmParams, t: usize) -> Result<Trace> {
        let n = self.trial_noise(t)?;
        self.run_trace_on(params, &n.x, &n.v)
    }

    pub fn run_trace_on(&self, params: &AlgorithmParams, x: &[f64], v: &[f64]) -> Result<Trace> {
        let mut plant = self.plant();
        let mut controller = Controller::new(*params, self.config.filter_len)?;
        run_controller(&mut plant, &mut controller, x, v, self.config.n_iters)
    }

    /// Every configured algorithm on trial `t`.
    pub fn run_trial(&self, t: usize) -> Result<TrialResult> {
        let noise = self.trial_noise(t)?;
        let mut outcomes = Vec::with_capacity(self.config.algorithms.len());
        let mut hekm_trace = None;
        for params in &self.config.algorithms {
            let trace = self.run_trace_on(params, &noise.x, &noise.v)?;
            let anr = anr_series(&trace.e, &trace.d, self.config.theta)?;
            outcomes.push(TrialOutcome {
                diverged: trace.diverged(),
                anr_plateau: anr.plateau(PLATEAU_FRACTION),
                anr,
                e: trace.e.clone(),
            });
            if t == 0 && params.kind() == AlgorithmKind::Fxhekm {
                hekm_trace = Some(trace);
            }
        }
        Ok(TrialResult {
            trial: t,
            clean_power: noise.clean_power,
            noise_power: noise.noise_power,
            sigma_v: noise.sigma_v,
            outcomes,
            hekm_trace,
        })
    }
}

/// One algorithm on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub e: Vec<f64>,
    pub anr: MetricSeries,
    pub anr_plateau: Option<f64>,
    pub diverged: bool,
}

/// All algorithms on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub clean_power: f64,
    pub noise_power: f64,
    pub sigma_v: f64,
    /// In configuration order.
    pub outcomes: Vec<TrialOutcome>,
    /// FXHEKM trace kept from trial 0 for the theory report.
    pub hekm_trace: Option<Trace>,
}

/// Ensemble results of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmResult {
    pub params: AlgorithmParams,
    pub mse: MetricSeries,
    pub anr: MetricSeries,
    /// Per-trial divergence flags.
    pub diverged: Vec<bool>,
    /// Per-trial ANR plateau (dB).
    pub trial_anr_plateau: Vec<Option<f64>>,
}

impl AlgorithmResult {
    pub fn kind(&self) -> AlgorithmKind {
        self.params.kind()
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }

    pub fn diverged_count(&self) -> usize {
        self.diverged.iter().filter(|d| **d).count()
    }

    pub fn mse_plateau(&self) -> Option<f64> {
        self.mse.plateau(PLATEAU_FRACTION)
    }

    pub fn anr_plateau(&self) -> Option<f64> {
        self.anr.plateau(PLATEAU_FRACTION)
    }
}

/// Output of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub algorithms: Vec<AlgorithmResult>,
    pub theory: Option<TheoryReport>,
    pub secondary_estimate: PathModel,
    pub identification_misalignment: Option<f64>,
    pub identification_error: Vec<f64>,
    /// Per-trial `σ_v`.
    pub sigma_v: Vec<f64>,
    /// `10·log10(Σ clean disturbance power / Σ realized measurement-noise
    /// power)` over all trials.
    pub realized_snr_db: Option<f64>,
    pub wall_clock: Duration,
}

impl ExperimentResult {
    pub fn algorithm(&self, kind: AlgorithmKind) -> Option<&AlgorithmResult> {
        self.algorithms.iter().find(|a| a.kind() == kind)
    }

    /// Equality of everything except the wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.config == other.config
            && self.algorithms == other.algorithms
            && self.theory == other.theory
            && self.secondary_estimate == other.secondary_estimate
            && self.identification_misalignment == other.identification_misalignment
            && self
                .sigma_v
                .iter()
                .map(|v| v.to_bits())
                .eq(other.sigma_v.iter().map(|v| v.to_bits()))
            && self.realized_snr_db.map(f64::to_bits) == other.realized_snr_db.map(f64::to_bits)
    }
}

/// Runs the experiment on the global rayon pool.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let started = Instant::now();
    let prep = PreparedExperiment::new(config)?;
    let n_alg = config.algorithms.len();
    let mut mse = vec![MseAccumulator::default(); n_alg];
    let mut anr = vec![AnrAccumulator::default(); n_alg];
    let mut diverged = vec![Vec::with_capacity(config.n_trials); n_alg];
    let mut plateaus = vec![Vec::with_capacity(config.n_trials); n_alg];
    let mut clean_power = 0.0;
    let mut noise_power = 0.0;
    let mut sigma_v = Vec::with_capacity(config.n_trials);
    let mut hekm_trace = None;

    // Trials held in memory between two ordered reductions. The result does
    // not depend on it.
    let batch_len = 2 * rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < config.n_trials {
        let end = (start + batch_len).min(config.n_trials);
        let batch: Vec<Result<TrialResult>> = (start..end)
            .into_par_iter()
            .map(|t| prep.run_trial(t))
            .collect();
        for r in batch {
            let r = r?;
            clean_power += r.clean_power;
            noise_power += r.noise_power;
            sigma_v.push(r.sigma_v);
            if r.hekm_trace.is_some() {
                hekm_trace = r.hekm_trace;
            }
            for (i, o) in r.outcomes.into_iter().enumerate() {
                mse[i].add(&o.e)?;
                anr[i].add(&o.anr)?;
                diverged[i].push(o.diverged);
                plateaus[i].push(o.anr_plateau);
            }
        }
        start = end;
    }

    let mut algorithms = Vec::with_capacity(n_alg);
    for (i, params) in config.algorithms.iter().enumerate() {
        algorithms.push(AlgorithmResult {
            params: *params,
            mse: mse[i].finish(params.kind().name())?,
            anr: anr[i].finish(params.kind().name())?,
            diverged: std::mem::take(&mut diverged[i]),
            trial_anr_plateau: std::mem::take(&mut plateaus[i]),
        });
    }

    let theory = match (&hekm_trace, config.algorithms.iter().find_map(hekm_params)) {
        (Some(trace), Some(h)) => {
            let warmup = config.filter_len + prep.secondary_estimate.len();
            let mut report = theory_from_trace(trace, &h, config.filter_len, warmup, sigma_v[0])?;
            report.simulated_mse_db = algorithms
                .iter()
                .find(|a| a.kind() == AlgorithmKind::Fxhekm)
                .and_then(AlgorithmResult::mse_plateau);
            Some(report)
        }
        _ => None,
    };

    let realized_snr_db = (noise_power > 0.0 && clean_power > 0.0)
        .then(|| 10.0 * (clean_power / noise_power).log10());

    Ok(ExperimentResult {
        config: config.clone(),
        algorithms,
        theory,
        secondary_estimate: prep.secondary_estimate,
        identification_misalignment: prep.identification_misalignment,
        identification_error: prep.identification_error,
        sigma_v,
        realized_snr_db,
        wall_clock: started.elapsed(),
    })
}

/// Runs the experiment on a dedicated pool of `workers` threads.
pub fn run_experiment_with_workers(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(config))
}

fn hekm_params(p: &AlgorithmParams) -> Option<HekmParams> {
    match p {
        AlgorithmParams::Fxhekm(h) => Some(*h),
        _ => None,
    }
}

/// Theory report from one recorded FXHEKM run: Φ over the trace after the
/// first `warmup` samples (while the filtered-reference line is still
/// filling, `‖x'‖²` is near zero and `φ(e)/e` near `1/δ`), eigenvalues over
/// the last quarter, `J_min = σ_v²`.
pub fn theory_from_trace(
    trace: &Trace,
    params: &HekmParams,
    filter_len: usize,
    warmup: usize,
    sigma_v: f64,
) -> Result<TheoryReport> {
    let skip = warmup.min(trace.len().saturating_sub(1));
    let phi_bar = estimate_phi_bar(&trace.e[skip..], &trace.ref_norm_sq[skip..], params)?;
    let phi_gain = estimate_phi_gain(&trace.e[skip..], &trace.ref_norm_sq[skip..], params)?;
    let n = trace.x_filtered.len();
    let start = n
        - ((n as f64 * COVARIANCE_TAIL).ceil() as usize)
            .max(filter_len)
            .min(n);
    let eigen = covariance_from_stream(&trace.x_filtered, filter_len, start)?;
    TheoryReport::compute(
        eigen,
        phi_bar,
        phi_gain,
        params.step_size(),
        sigma_v * sigma_v,
    )
}

/// Parameters accepted by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    P,
    Alpha,
    Eta,
    Zeta,
    Rho,
    SnrDb,
    AlphaS,
    Mu,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "p" => SweepParam::P,
            "alpha" => SweepParam::Alpha,
            "eta" => SweepParam::Eta,
            "zeta" => SweepParam::Zeta,
            "rho" => SweepParam::Rho,
            "snr_db" => SweepParam::SnrDb,
            "alpha_s" => SweepParam::AlphaS,
            "mu" => SweepParam::Mu,
            other => return Err(Error::config(format!("unknown sweep parameter `{other}`"))),
        })
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::P => "p",
            SweepParam::Alpha => "alpha",
            SweepParam::Eta => "eta",
            SweepParam::Zeta => "zeta",
            SweepParam::Rho => "rho",
            SweepParam::SnrDb => "snr_db",
            SweepParam::AlphaS => "alpha_s",
            SweepParam::Mu => "mu",
        }
    }

    /// Copy of `base` with this parameter set to `value`. FXHEKM parameters
    /// apply to the FXHEKM entry; `mu` sets every algorithm's step size
    /// (through ρ for FXHEKM and FXGHT).
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            SweepParam::SnrDb => {
                cfg.measurement = MeasurementConfig {
                    snr_db: Some(value),
                    ..Default::default()
                }
            }
            SweepParam::AlphaS => cfg.noise.alpha_s = value,
            SweepParam::Mu => {
                for a in &mut cfg.algorithms {
                    match a {
                        AlgorithmParams::Fxlms { mu }
                        | AlgorithmParams::Fxgmcc { mu, .. }
                        | AlgorithmParams::Ifxgmcc { mu, .. }
                        | AlgorithmParams::Fxech { mu, .. }
                        | AlgorithmParams::Fxgr { mu, .. } => *mu = value,
                        AlgorithmParams::Fxght { rho, .. } => *rho = value,
                        AlgorithmParams::Fxhekm(h) => *h = h.with_step_size(value),
                    }
                }
            }
            _ => {
                let mut found = false;
                for a in &mut cfg.algorithms {
                    if let AlgorithmParams::Fxhekm(h) = a {
                        found = true;
                        match self {
                            SweepParam::P => h.p = value,
                            SweepParam::Alpha => h.alpha = value,
                            SweepParam::Eta => h.eta = value,
                            SweepParam::Zeta => h.zeta = value,
                            SweepParam::Rho => h.rho = value,
                            _ => unreachable!(),
                        }
                    }
                }
                if !found {
                    return Err(Error::config(format!(
                        "sweeping `{}` needs an FXHEKM entry",
                        self.name()
                    )));
                }
            }
        }
        cfg.output_dir = base.output_dir.join(format!("{}={}", self.name(), value));
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One experiment per value, in order.
pub fn sweep(
    config: &ExperimentConfig,
    parameter: SweepParam,
    values: &[f64],
) -> Result<Vec<ExperimentResult>> {
    values
        .iter()
        .map(|&v| run_experiment(&parameter.apply(config, v)?))
        .collect()
}

/// Objective `J(e)` and its derivative `dJ/de` on `grid` for each FXHEKM
/// parameter set. Columns: `e`, then `J_<label>`, `dJ_<label>` per set.
pub fn objective_curves_csv(sets: &[(String, HekmParams)], grid: &[f64]) -> String {
    let mut s = String::from("e");
    for (label, _) in sets {
        let _ = write!(s, ",J_{label},dJ_{label}");
    }
    s.push('\n');
    for &e in grid {
        let _ = write!(s, "{e}");
        for (_, h) in sets {
            let unnormalized = HekmParams {
                delta_reg: 0.0,
                ..*h
            };
            let j = crate::algorithms::hekm_objective(e, h);
            let dj = h.step_size() * crate::algorithms::hekm_phi(e, 1.0, &unnormalized);
            let _ = write!(s, ",{j},{dj}");
        }
        s.push('\n');
    }
    s
}

/// Writes a sweep: one sub-directory per value plus, for `p` and `alpha`,
/// `objective_curves.csv` in `output_dir`.
pub fn emit_sweep(
    base: &ExperimentConfig,
    parameter: SweepParam,
    values: &[f64],
    results: &[ExperimentResult],
    output_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (v, r) in values.iter().zip(results) {
        let dir = output_dir.join(format!("{}={}", parameter.name(), v));
        written.extend(emit_csv(r, &dir)?);
    }
    if matches!(parameter, SweepParam::P | SweepParam::Alpha) && !values.is_empty() {
        let h = base
            .algorithms
            .iter()
            .find_map(hekm_params)
            .ok_or_else(|| Error::config("sweep needs an FXHEKM entry"))?;
        let sets: Vec<(String, HekmParams)> = values
            .iter()
            .map(|&v| {
                let mut hv = h;
                match parameter {
                    SweepParam::P => hv.p = v,
                    _ => hv.alpha = v,
                }
                (format!("{}={}", parameter.name(), v), hv)
            })
            .collect();
        let grid: Vec<f64> = (-300..=300).map(|i| i as f64 * 0.01).collect();
        fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
        let path = output_dir.join("objective_curves.csv");
        write_file(&path, &objective_curves_csv(&sets, &grid))?;
        written.push(path);
    }
    Ok(written)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// CSV text for a set of equally long series: `iteration,<name>,…`, one row
/// per iteration starting at 1, absent values as empty fields.
pub fn metric_csv(series: &[&MetricSeries]) -> Result<String> {
    let n = series.first().map_or(0, |s| s.iterations());
    if series.iter().any(|s| s.iterations() != n) {
        return Err(Error::config("series lengths differ"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::config(format!("csv: {e}"));
    let header = std::iter::once("iteration").chain(series.iter().map(|s| s.name.as_str()));
    w.write_record(header).map_err(csv_err)?;
    for i in 0..n {
        let row = std::iter::once((i + 1).to_string()).chain(
            series
                .iter()
                .map(|s| s.values_db[i].map_or_else(String::new, |v| v.to_string())),
        );
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses [`metric_csv`] output back into series.
pub fn parse_metric_csv(text: &str) -> std::result::Result<Vec<MetricSeries>, String> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.get(0) != Some("iteration") {
        return Err("first column must be `iteration`".into());
    }
    let mut series: Vec<MetricSeries> = header
        .iter()
        .skip(1)
        .map(|name| MetricSeries::new(name, Vec::new()))
        .collect();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let it: usize = rec[0]
            .parse()
            .map_err(|e| format!("row {}: {e}", row + 1))?;
        if it != row + 1 {
            return Err(format!("row {}: iteration {it} out of order", row + 1));
        }
        for (s, f) in series.iter_mut().zip(rec.iter().skip(1)) {
            s.values_db.push(if f.is_empty() {
                None
            } else {
                Some(f.parse().map_err(|e| format!("row {}: {e}", row + 1))?)
            });
        }
    }
    Ok(series)
}

/// Echo of the resolved configuration plus every derived quantity needed to
/// re-run any trial in isolation.
pub fn manifest_text(result: &ExperimentResult) -> String {
    let mut s = String::new();
    let cfg = &result.config;
    let _ = writeln!(s, "# resolved configuration");
    s.push_str(&cfg.to_toml());
    let _ = writeln!(s);
    let _ = writeln!(s, "# derived");
    let _ = writeln!(s, "trial_seed = \"seed_base ^ trial\"");
    let _ = writeln!(
        s,
        "reference_seed = \"derive_seed(trial_seed, {STREAM_REFERENCE})\""
    );
    let _ = writeln!(
        s,
        "measurement_seed = \"derive_seed(trial_seed, {STREAM_MEASUREMENT})\""
    );
    let _ = writeln!(
        s,
        "identification_seed = {}",
        derive_seed(cfg.seed_base, IDENT_STREAM)
    );
    let _ = writeln!(
        s,
        "sigma_v = \"calibrated per trial on that trial's clean disturbance\""
    );
    if let Some(s0) = result.sigma_v.first() {
        let _ = writeln!(s, "sigma_v_trial0 = {s0:?}");
    }
    match result.realized_snr_db {
        Some(v) => {
            let _ = writeln!(s, "realized_snr_db = {v:?}");
        }
        None => {
            let _ = writeln!(s, "realized_snr_db = \"none\"");
        }
    }
    if let Some(m) = result.identification_misalignment {
        let _ = writeln!(s, "identification_misalignment = {m:?}");
    }
    for a in &result.algorithms {
        let _ = writeln!(s, "step_size.{} = {:?}", a.name(), a.params.step_size());
        let _ = writeln!(s, "diverged_trials.{} = {}", a.name(), a.diverged_count());
    }
    s
}

fn gnuplot_script(result: &ExperimentResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set xlabel 'iteration'");
    for (file, ylabel) in [("mse", "MSE (dB)"), ("anr", "ANR (dB)")] {
        let _ = writeln!(s, "set terminal pngcairo size 900,600");
        let _ = writeln!(s, "set output '{file}.png'");
        let _ = writeln!(s, "set ylabel '{ylabel}'");
        let plots: Vec<String> = (0..result.algorithms.len())
            .map(|i| format!("'{file}.csv' using 1:{} with lines", i + 2))
            .collect();
        let mut line = format!("plot {}", plots.join(", "));
        if file == "mse" {
            if let Some(j) = result.theory.as_ref().and_then(TheoryReport::j_inf_db) {
                let _ = write!(line, ", {j} title 'J(inf)' dashtype 2");
            }
        }
        let _ = writeln!(s, "{line}");
    }
    s
}

/// Writes `mse.csv`, `anr.csv`, `divergence.csv`, `theory.txt`,
/// `manifest.txt`, `secondary_estimate.txt`, `identification.csv` (when the
/// estimate was identified) and `plot.gp` into `output_dir`.
pub fn emit_csv(result: &ExperimentResult, output_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, contents: String| -> Result<()> {
        let path = output_dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
        Ok(())
    };

    let mse: Vec<&MetricSeries> = result.algorithms.iter().map(|a| &a.mse).collect();
    put("mse.csv", metric_csv(&mse)?)?;
    let anr: Vec<&MetricSeries> = result.algorithms.iter().map(|a| &a.anr).collect();
    put("anr.csv", metric_csv(&anr)?)?;

    let mut div = String::from("trial");
    for a in &result.algorithms {
        let _ = write!(div, ",{}_diverged,{}_anr_plateau_db", a.name(), a.name());
    }
    div.push('\n');
    for t in 0..result.config.n_trials {
        let _ = write!(div, "{t}");
        for a in &result.algorithms {
            let _ = write!(div, ",{}", u8::from(a.diverged[t]));
            div.push(',');
            if let Some(p) = a.trial_anr_plateau[t] {
                let _ = write!(div, "{p}");
            }
        }
        div.push('\n');
    }
    put("divergence.csv", div)?;

    if let Some(th) = &result.theory {
        put("theory.txt", th.to_text())?;
    }
    put("manifest.txt", manifest_text(result))?;
    put(
        "secondary_estimate.txt",
        result.secondary_estimate.to_text(),
    )?;
    if !result.identification_error.is_empty() {
        let mut s = String::from("sample,error\n");
        for (i, e) in result.identification_error.iter().enumerate() {
            let _ = writeln!(s, "{},{e}", i + 1);
        }
        put("identification.csv", s)?;
    }
    put("plot.gp", gnuplot_script(result))?;
    Ok(written)
}
