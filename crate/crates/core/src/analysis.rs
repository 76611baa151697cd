//! Executable theory for FXHEKM: the Φ estimate, step-size bounds, the
//! steady-state MSE prediction and per-iteration operation counts.
//!
//! The steady-state results in closed form:
//!
//! ```text
//! 0 < μ < 2 / (λ_max·Φ)            (general)
//! 0 < μ < 1 / (λ_max·Φ)            (p = 2)
//! u_ii(∞) = J_min / (2 − μ²Φ²λ_i)
//! M       = Σ_i λ_i / (2 − μ²Φ²λ_i)
//! J(∞)    = J_min·(1 + M),  J_min = σ_v²
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::algorithms::{hekm_phi, hekm_phi_gain, AlgorithmKind, HekmParams};
use crate::error::{Error, Result};

/// `(1/N)·Σ φ(e(n))` with the recorded per-sample `‖x'(n)‖²`.
///
/// `φ` is odd in `e`, so for a residual that is symmetric about zero this
/// average is close to zero and may take either sign.
pub fn estimate_phi_bar(
    error_trace: &[f64],
    ref_norm_trace: &[f64],
    params: &HekmParams,
) -> Result<f64> {
    check_traces(error_trace, ref_norm_trace)?;
    let sum: f64 = error_trace
        .iter()
        .zip(ref_norm_trace)
        .map(|(&e, &r)| hekm_phi(e, r, params))
        .sum();
    Ok(sum / error_trace.len() as f64)
}

/// `(1/N)·Σ φ(e(n))/e(n)`: the trace average of the non-negative gain that
/// multiplies `e(n)·x'(n)` in the update. This is the quantity that enters
/// the mean weight-error recursion once the error is factored out.
///
/// Samples with `e = 0` are skipped when `p < 2` (the gain is unbounded there).
pub fn estimate_phi_gain(
    error_trace: &[f64],
    ref_norm_trace: &[f64],
    params: &HekmParams,
) -> Result<f64> {
    check_traces(error_trace, ref_norm_trace)?;
    let (sum, n) = error_trace
        .iter()
        .zip(ref_norm_trace)
        .filter(|(&e, _)| e != 0.0 || params.p >= 2.0)
        .map(|(&e, &r)| hekm_phi_gain(e, r, params))
        .fold((0.0, 0usize), |(s, n), g| (s + g, n + 1));
    if n == 0 {
        return Err(Error::config("no usable samples for the gain estimate"));
    }
    Ok(sum / n as f64)
}

fn check_traces(e: &[f64], r: &[f64]) -> Result<()> {
    if e.is_empty() {
        return Err(Error::config("empty error trace"));
    }
    if e.len() != r.len() {
        return Err(Error::config(format!(
            "error trace length {} differs from reference-norm trace length {}",
            e.len(),
            r.len()
        )));
    }
    Ok(())
}

/// Eigenvalues (descending) of the sample covariance `(1/N)·Σ x'(n)x'(n)ᵀ`.
/// Values above `−1e−10` that come out negative are clamped to zero.
pub fn estimate_reference_covariance<V: AsRef<[f64]>>(ref_vectors: &[V]) -> Result<Vec<f64>> {
    let first = ref_vectors
        .first()
        .ok_or_else(|| Error::config("no reference vectors"))?;
    let len = first.as_ref().len();
    if len == 0 {
        return Err(Error::config("reference vectors are empty"));
    }
    if ref_vectors.len() < len {
        return Err(Error::config(format!(
            "need at least {len} reference vectors, got {}",
            ref_vectors.len()
        )));
    }
    let mut r = DMatrix::<f64>::zeros(len, len);
    for v in ref_vectors {
        let v = v.as_ref();
        if v.len() != len {
            return Err(Error::config("reference vectors have different lengths"));
        }
        for i in 0..len {
            for j in i..len {
                r[(i, j)] += v[i] * v[j];
            }
        }
    }
    eigen_desc(r, ref_vectors.len())
}

/// Same as [`estimate_reference_covariance`] on the vectors
/// `x'(n) = [s(n), s(n−1), …, s(n−len+1)]` for `n` in `start..s.len()`, with
/// zeros before the start of the stream.
pub fn covariance_from_stream(x_filtered: &[f64], len: usize, start: usize) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::config("vector length must be at least 1"));
    }
    let count = x_filtered.len().saturating_sub(start);
    if count < len {
        return Err(Error::config(format!(
            "need at least {len} reference vectors, got {count}"
        )));
    }
    let at = |k: isize| if k < 0 { 0.0 } else { x_filtered[k as usize] };
    let mut r = DMatrix::<f64>::zeros(len, len);
    for n in start..x_filtered.len() {
        for i in 0..len {
            let xi = at(n as isize - i as isize);
            for j in i..len {
                r[(i, j)] += xi * at(n as isize - j as isize);
            }
        }
    }
    eigen_desc(r, count)
}

fn eigen_desc(mut upper: DMatrix<f64>, count: usize) -> Result<Vec<f64>> {
    let len = upper.nrows();
    let inv = 1.0 / count as f64;
    for i in 0..len {
        for j in i..len {
            upper[(i, j)] *= inv;
            upper[(j, i)] = upper[(i, j)];
        }
    }
    let mut ev: Vec<f64> = upper
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    if let Some(bad) = ev.iter().find(|&&l| l < -1e-10) {
        return Err(Error::TheoryUndefined(format!(
            "covariance has eigenvalue {bad:e} below -1e-10"
        )));
    }
    ev.iter_mut().for_each(|l| *l = l.max(0.0));
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Inputs shared by the stability and steady-state formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryInputs {
    eigenvalues: Vec<f64>,
    pub phi_bar: f64,
    pub mu: f64,
    pub j_min: f64,
}

impl TheoryInputs {
    /// Sorts `eigenvalues` in descending order.
    pub fn new(mut eigenvalues: Vec<f64>, phi_bar: f64, mu: f64, j_min: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::config("at least one eigenvalue is required"));
        }
        if eigenvalues.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::config("eigenvalues must be finite and non-negative"));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::config(format!("mu = {mu} must be > 0")));
        }
        if !(j_min >= 0.0 && j_min.is_finite()) {
            return Err(Error::config(format!("j_min = {j_min} must be >= 0")));
        }
        if !phi_bar.is_finite() {
            return Err(Error::config("phi_bar must be finite"));
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(Self {
            eigenvalues,
            phi_bar,
            mu,
            j_min,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..self.clone() }
    }

    /// `μ²Φ²`.
    fn mu_phi_sq(&self) -> f64 {
        (self.mu * self.phi_bar).powi(2)
    }
}

/// Admissible step-size interval `(mu_lo, mu_hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityBound {
    pub mu_lo: f64,
    pub mu_hi: f64,
}

impl StabilityBound {
    pub fn contains(&self, mu: f64) -> bool {
        mu > self.mu_lo && mu < self.mu_hi
    }
}

/// `μ_hi = 2/(λ_max·Φ)`, or `1/(λ_max·Φ)` for the `p = 2` special case.
pub fn stability_bound(theory: &TheoryInputs, special_case_p2: bool) -> Result<StabilityBound> {
    let prod = theory.lambda_max() * theory.phi_bar;
    if prod.is_nan() || prod <= 0.0 {
        return Err(Error::TheoryUndefined(format!(
            "lambda_max * phi = {prod:e} is not positive"
        )));
    }
    let num = if special_case_p2 { 1.0 } else { 2.0 };
    Ok(StabilityBound {
        mu_lo: 0.0,
        mu_hi: num / prod,
    })
}

/// Largest `|1 − μΦλ_k|^steps` over all modes: the decay of the mean
/// weight error after `steps` iterations.
pub fn mean_error_contraction(theory: &TheoryInputs, steps: u32) -> f64 {
    theory
        .eigenvalues
        .iter()
        .map(|&l| {
            let r = 1.0 - theory.mu * theory.phi_bar * l;
            let mut acc = 1.0f64;
            for _ in 0..steps {
                acc *= r.abs();
                if acc > 1e300 {
                    return f64::INFINITY;
                }
            }
            acc
        })
        .fold(0.0, f64::max)
}

/// Steady-state prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    /// Excess MSE `J_min·M`.
    pub j_ex: f64,
    /// `M = Σ λ_i / (2 − μ²Φ²λ_i)`.
    pub misalignment: f64,
    /// `J(∞) = J_min·(1 + M)`.
    pub j_inf: f64,
}

pub fn steady_state_mse(theory: &TheoryInputs) -> Result<SteadyState> {
    let k = theory.mu_phi_sq();
    let mut m = 0.0;
    for &l in &theory.eigenvalues {
        let den = 2.0 - k * l;
        if den.is_nan() || den <= 0.0 {
            return Err(Error::TheoryOutOfRange(format!(
                "2 - mu^2 phi^2 lambda = {den:e} for lambda = {l:e}"
            )));
        }
        m += l / den;
    }
    Ok(SteadyState {
        j_ex: theory.j_min * m,
        misalignment: m,
        j_inf: theory.j_min * (1.0 + m),
    })
}

/// Iterates the diagonal covariance recursion
/// `u(n+1) = (1 − μ²Φ²λ)²·u(n) + μ²Φ²·J_min·λ` from `u(0) = 0` until it
/// settles, then checks the limit against `J_min/(2 − μ²Φ²λ)`.
///
/// Returns the converged diagonal (modes with `λ = 0` stay at 0).
pub fn covariance_recursion_check(theory: &TheoryInputs, steps: usize) -> Result<Vec<f64>> {
    let k = theory.mu_phi_sq();
    let j = theory.j_min;
    let mut out = Vec::with_capacity(theory.eigenvalues.len());
    for &l in &theory.eigenvalues {
        if l == 0.0 {
            out.push(0.0);
            continue;
        }
        let a = k * l;
        if !(a > 0.0 && a < 2.0) {
            return Err(Error::TheoryOutOfRange(format!(
                "mu^2 phi^2 lambda = {a:e} outside (0, 2)"
            )));
        }
        let rate = (1.0 - a) * (1.0 - a);
        let drive = a * j;
        let closed = j / (2.0 - a);
        let mut u = 0.0f64;
        let mut settled = false;
        for _ in 0..steps {
            let next = rate * u + drive;
            let change = (next - u).abs();
            u = next;
            if change <= 1e-15 * u.abs().max(1e-300) {
                settled = true;
                break;
            }
        }
        if !settled || (u - closed).abs() > 1e-8 {
            return Err(Error::TheoryOutOfRange(format!(
                "recursion for lambda = {l:e} did not reach {closed:e} in {steps} steps (at {u:e})"
            )));
        }
        out.push(u);
    }
    Ok(out)
}

/// Per-iteration operation counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpCount {
    pub mults: u64,
    pub divs: u64,
    pub adds: u64,
    pub nonlinear: u64,
}

/// Multiplications, divisions, additions and nonlinear evaluations per
/// iteration for filter length `l`, secondary-path estimate length `m` and
/// integer kernel exponent `p`.
pub fn complexity_count(kind: AlgorithmKind, l: u64, m: u64, p: u64) -> Result<OpCount> {
    if l == 0 || m == 0 {
        return Err(Error::config("L and M must be at least 1"));
    }
    let c = |mults, divs, adds, nonlinear| OpCount {
        mults,
        divs,
        adds,
        nonlinear,
    };
    Ok(match kind {
        AlgorithmKind::Fxlms => c(2 * l + 1, 0, 2 * l + 2 * m - 3, 0),
        AlgorithmKind::Fxgmcc => c(2 * l + 4, 0, 2 * l + 2 * m - 3, 3),
        AlgorithmKind::Fxght => c((p + 5) * (l - 1) + l, 0, 3 * l - 2, 1),
        AlgorithmKind::Ifxgmcc => c(2 * l + 6, 0, 2 * l + 2 * m - 3, 4),
        AlgorithmKind::Fxgr => c(2 * l, 1, 2 * l, 0),
        AlgorithmKind::Fxech => c(2 * l + p + 8, 1, 2 * l + 2, 2),
        AlgorithmKind::Fxhekm => c(3 * l + 2 * p + 7, 1, 3 * l - 2, 4),
    })
}

/// Theory-versus-simulation summary for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    /// Average of `φ(e)` over the recorded trace.
    pub phi_bar: f64,
    /// Average of `φ(e)/e`; the Φ used in the bounds below.
    pub phi_gain: f64,
    pub lambda_max: f64,
    pub eigen_sum: f64,
    pub mu: f64,
    pub mu_hi: Option<f64>,
    pub mu_hi_p2: Option<f64>,
    pub j_min: f64,
    pub misalignment: Option<f64>,
    pub j_inf: Option<f64>,
    /// Mean of the last 10% of the simulated ensemble MSE, in dB.
    pub simulated_mse_db: Option<f64>,
}

impl TheoryReport {
    /// Evaluates the formulas for the given measurements. Formula failures
    /// leave the corresponding fields empty.
    pub fn compute(
        eigenvalues: Vec<f64>,
        phi_bar: f64,
        phi_gain: f64,
        mu: f64,
        j_min: f64,
    ) -> Result<Self> {
        let inputs = TheoryInputs::new(eigenvalues, phi_gain, mu, j_min)?;
        let mu_hi = stability_bound(&inputs, false).ok().map(|b| b.mu_hi);
        let mu_hi_p2 = stability_bound(&inputs, true).ok().map(|b| b.mu_hi);
        let ss = steady_state_mse(&inputs).ok();
        Ok(Self {
            phi_bar,
            phi_gain,
            lambda_max: inputs.lambda_max(),
            eigen_sum: inputs.eigenvalues.iter().sum(),
            mu,
            mu_hi,
            mu_hi_p2,
            j_min,
            misalignment: ss.map(|s| s.misalignment),
            j_inf: ss.map(|s| s.j_inf),
            simulated_mse_db: None,
        })
    }

    pub fn j_inf_db(&self) -> Option<f64> {
        self.j_inf.filter(|j| *j > 0.0).map(|j| 10.0 * j.log10())
    }

    pub fn j_min_db(&self) -> Option<f64> {
        (self.j_min > 0.0).then(|| 10.0 * self.j_min.log10())
    }

    /// `key = value` lines; absent values are written as `none`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| format!("{x:?}"));
        let _ = writeln!(s, "phi_bar = {:?}", self.phi_bar);
        let _ = writeln!(s, "phi_gain = {:?}", self.phi_gain);
        let _ = writeln!(s, "lambda_max = {:?}", self.lambda_max);
        let _ = writeln!(s, "eigen_sum = {:?}", self.eigen_sum);
        let _ = writeln!(s, "mu = {:?}", self.mu);
        let _ = writeln!(s, "mu_hi = {}", opt(self.mu_hi));
        let _ = writeln!(s, "mu_hi_p2 = {}", opt(self.mu_hi_p2));
        let _ = writeln!(s, "j_min = {:?}", self.j_min);
        let _ = writeln!(s, "j_min_db = {}", opt(self.j_min_db()));
        let _ = writeln!(s, "misalignment = {}", opt(self.misalignment));
        let _ = writeln!(s, "j_inf = {}", opt(self.j_inf));
        let _ = writeln!(s, "j_inf_db = {}", opt(self.j_inf_db()));
        let _ = writeln!(s, "simulated_mse_db = {}", opt(self.simulated_mse_db));
        s
    }

    /// Parses [`TheoryReport::to_text`] output. Derived `*_db` keys are ignored.
    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let opt = |k: &str| -> std::result::Result<Option<f64>, String> {
            match kv.get(k).map(String::as_str) {
                None => Err(format!("missing key `{k}`")),
                Some("none") => Ok(None),
                Some(v) => v.parse().map(Some).map_err(|e| format!("`{k}`: {e}")),
            }
        };
        let req = |k: &str| opt(k)?.ok_or_else(|| format!("`{k}` must not be none"));
        Ok(Self {
            phi_bar: req("phi_bar")?,
            phi_gain: req("phi_gain")?,
            lambda_max: req("lambda_max")?,
            eigen_sum: req("eigen_sum")?,
            mu: req("mu")?,
            mu_hi: opt("mu_hi")?,
            mu_hi_p2: opt("mu_hi_p2")?,
            j_min: req("j_min")?,
            misalignment: opt("misalignment")?,
            j_inf: opt("j_inf")?,
            simulated_mse_db: opt("simulated_mse_db")?,
        })
    }
}
