//! Filtered-X controllers.
//!
//! Every controller adapts its weights as
//!
//! ```text
//! w(n+1) = w(n) + c(e(n), ‖x'(n)‖²)·x'(n)
//! ```
//!
//! where the scalar `c` is the algorithm's step size times its score
//! function. For FXHEKM
//!
//! ```text
//! c = μ·q(e)·φ(e),  μ = ρηp
//! φ(e) = sech²(α·exp(−η|e|^p))·exp(−η|e|^p)·|e|^(p−1)·sign(e) / (δ + ‖x'(n)‖²)
//! q(e) = 1 if |e| < ζ else 0
//! ```
//!
//! which descends the objective `J = −(ρ/α)·tanh(α·exp(−η|e|^p))`.
//! The competitor score functions are listed on [`AlgorithmParams`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::PlantState;
use crate::signal::{dot, DelayLine, TapVector};

/// Any weight beyond this magnitude marks a run as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Default regularizer added to `‖x'‖²`.
pub const DEFAULT_DELTA_REG: f64 = 1e-6;

/// Hyperparameters of FXHEKM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HekmParams {
    /// Learning-rate constant ρ.
    pub rho: f64,
    /// Kernel constant η.
    pub eta: f64,
    /// tanh constant α.
    pub alpha: f64,
    /// Kernel exponent.
    pub p: f64,
    /// M-estimate threshold ζ.
    pub zeta: f64,
    /// Regularizer δ on the reference energy.
    #[serde(default = "default_delta_reg")]
    pub delta_reg: f64,
}

fn default_delta_reg() -> f64 {
    DEFAULT_DELTA_REG
}

impl HekmParams {
    pub fn new(rho: f64, eta: f64, alpha: f64, p: f64, zeta: f64, delta_reg: f64) -> Result<Self> {
        let params = Self {
            rho,
            eta,
            alpha,
            p,
            zeta,
            delta_reg,
        };
        params.validate()?;
        Ok(params)
    }

    /// ρ = 0.1, η = 1, α = 0.4, p = 2, ζ = 0.2, δ = 10⁻⁶.
    pub fn reference() -> Self {
        Self {
            rho: 0.1,
            eta: 1.0,
            alpha: 0.4,
            p: 2.0,
            zeta: 0.2,
            delta_reg: DEFAULT_DELTA_REG,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho", self.rho),
            ("eta", self.eta),
            ("alpha", self.alpha),
            ("p", self.p),
            ("zeta", self.zeta),
            ("delta_reg", self.delta_reg),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("FXHEKM {name} = {v} must be > 0")));
            }
        }
        Ok(())
    }

    /// Effective step size μ = ρηp.
    pub fn step_size(&self) -> f64 {
        self.rho * self.eta * self.p
    }

    /// Returns a copy whose ρ is chosen so that `step_size() == mu`.
    pub fn with_step_size(mut self, mu: f64) -> Self {
        self.rho = mu / (self.eta * self.p);
        self
    }
}

/// `J(e) = −(ρ/α)·tanh(α·exp(−η|e|^p))`.
pub fn hekm_objective(e: f64, params: &HekmParams) -> f64 {
    let kernel = (-params.eta * e.abs().powf(params.p)).exp();
    -(params.rho / params.alpha) * (params.alpha * kernel).tanh()
}

/// `φ(e)` with the given reference energy `‖x'‖²`.
pub fn hekm_phi(e: f64, ref_norm_sq: f64, params: &HekmParams) -> f64 {
    if e == 0.0 {
        return 0.0;
    }
    let mag = e.abs();
    let kernel = (-params.eta * mag.powf(params.p)).exp();
    let sech = 1.0 / (params.alpha * kernel).cosh();
    sech * sech * kernel * mag.powf(params.p - 1.0) * e.signum() / (params.delta_reg + ref_norm_sq)
}

/// M-estimate gate: true (q = 1) iff `|e| < zeta`.
pub fn hekm_gate(e: f64, zeta: f64) -> bool {
    e.abs() < zeta
}

/// `φ(e)/e`: the non-negative gain left after factoring the error out of
/// `φ`. Equals `sech²(α k)·k·|e|^(p−2) / (δ + ‖x'‖²)` with `k = exp(−η|e|^p)`.
///
/// At `e = 0` this is the limit for `p = 2`, `+∞` for `p < 2` and `0` for `p > 2`.
pub fn hekm_phi_gain(e: f64, ref_norm_sq: f64, params: &HekmParams) -> f64 {
    let mag = e.abs();
    let kernel = (-params.eta * mag.powf(params.p)).exp();
    let sech = 1.0 / (params.alpha * kernel).cosh();
    sech * sech * kernel * mag.powf(params.p - 2.0) / (params.delta_reg + ref_norm_sq)
}

/// Identifier of a filtered-X algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmKind {
    #[serde(rename = "FXLMS")]
    Fxlms,
    #[serde(rename = "FXGMCC")]
    Fxgmcc,
    #[serde(rename = "IFXGMCC")]
    Ifxgmcc,
    #[serde(rename = "FXGHT")]
    Fxght,
    #[serde(rename = "FXECH", alias = "FXECHF")]
    Fxech,
    #[serde(rename = "FXGR")]
    Fxgr,
    #[serde(rename = "FXHEKM")]
    Fxhekm,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 7] = [
        AlgorithmKind::Fxlms,
        AlgorithmKind::Fxgmcc,
        AlgorithmKind::Fxght,
        AlgorithmKind::Ifxgmcc,
        AlgorithmKind::Fxgr,
        AlgorithmKind::Fxech,
        AlgorithmKind::Fxhekm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Fxlms => "FXLMS",
            AlgorithmKind::Fxgmcc => "FXGMCC",
            AlgorithmKind::Ifxgmcc => "IFXGMCC",
            AlgorithmKind::Fxght => "FXGHT",
            AlgorithmKind::Fxech => "FXECH",
            AlgorithmKind::Fxgr => "FXGR",
            AlgorithmKind::Fxhekm => "FXHEKM",
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FXLMS" => Ok(AlgorithmKind::Fxlms),
            "FXGMCC" => Ok(AlgorithmKind::Fxgmcc),
            "IFXGMCC" => Ok(AlgorithmKind::Ifxgmcc),
            "FXGHT" => Ok(AlgorithmKind::Fxght),
            "FXECH" | "FXECHF" => Ok(AlgorithmKind::Fxech),
            "FXGR" => Ok(AlgorithmKind::Fxgr),
            "FXHEKM" => Ok(AlgorithmKind::Fxhekm),
            other => Err(Error::config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Per-algorithm parameters. Score functions (`ψ`), with the weight step
/// `w += step·ψ·x'`:
///
/// | kind    | step | ψ(e) |
/// |---------|------|------|
/// | FXLMS   | μ    | e |
/// | FXGMCC  | μ    | exp(−ν(\|e\|/σ)^p)·\|e\|^(p−1)·sign(e) |
/// | IFXGMCC | μ    | (νp/σ^p)·exp(−ν(\|e\|/σ)^p)·\|e\|^(p−1)·sign(e) |
/// | FXGHT   | ρ    | σ·sech²(λ\|e\|^p)·\|e\|^(p−1)·sign(e) |
/// | FXGR    | μ    | e·q(e) |
/// | FXECH   | μ    | ln γ·sinh(u)·γ^(λ(cosh u − 1)), u = \|e\|^(p−1)·sign(e) |
/// | FXHEKM  | ρηp  | q(e)·φ(e) |
///
/// Only FXHEKM normalizes by the reference energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum AlgorithmParams {
    #[serde(rename = "FXLMS")]
    Fxlms { mu: f64 },
    #[serde(rename = "FXGMCC")]
    Fxgmcc {
        mu: f64,
        sigma: f64,
        p: f64,
        nu: f64,
    },
    #[serde(rename = "IFXGMCC")]
    Ifxgmcc {
        mu: f64,
        sigma: f64,
        p: f64,
        nu: f64,
    },
    #[serde(rename = "FXGHT")]
    Fxght {
        rho: f64,
        lambda: f64,
        p: f64,
        sigma: f64,
    },
    #[serde(rename = "FXECH", alias = "FXECHF")]
    Fxech {
        gamma: f64,
        mu: f64,
        lambda: f64,
        p: f64,
    },
    #[serde(rename = "FXGR")]
    Fxgr { mu: f64, zeta: f64 },
    #[serde(rename = "FXHEKM")]
    Fxhekm(HekmParams),
}

impl AlgorithmParams {
    /// The reference parameter set for `kind`.
    pub fn reference(kind: AlgorithmKind) -> Self {
        match kind {
            AlgorithmKind::Fxlms => AlgorithmParams::Fxlms { mu: 0.1 },
            AlgorithmKind::Fxgmcc => AlgorithmParams::Fxgmcc {
                mu: 0.0495,
                sigma: 1.5,
                p: 1.7,
                nu: 1.0,
            },
            AlgorithmKind::Fxght => AlgorithmParams::Fxght {
                rho: 0.1,
                lambda: 0.4,
                p: 2.0,
                sigma: 14.5,
            },
            AlgorithmKind::Ifxgmcc => AlgorithmParams::Ifxgmcc {
                mu: 0.0535,
                sigma: 2.0,
                p: 1.5,
                nu: 0.5,
            },
            AlgorithmKind::Fxgr => AlgorithmParams::Fxgr { mu: 0.1, zeta: 0.2 },
            AlgorithmKind::Fxech => AlgorithmParams::Fxech {
                gamma: std::f64::consts::E,
                mu: 0.034,
                lambda: 3.4,
                p: 2.0,
            },
            AlgorithmKind::Fxhekm => AlgorithmParams::Fxhekm(HekmParams::reference()),
        }
    }

    pub fn kind(&self) -> AlgorithmKind {
        match self {
            AlgorithmParams::Fxlms { .. } => AlgorithmKind::Fxlms,
            AlgorithmParams::Fxgmcc { .. } => AlgorithmKind::Fxgmcc,
            AlgorithmParams::Ifxgmcc { .. } => AlgorithmKind::Ifxgmcc,
            AlgorithmParams::Fxght { .. } => AlgorithmKind::Fxght,
            AlgorithmParams::Fxech { .. } => AlgorithmKind::Fxech,
            AlgorithmParams::Fxgr { .. } => AlgorithmKind::Fxgr,
            AlgorithmParams::Fxhekm(_) => AlgorithmKind::Fxhekm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "{} {name} = {v} must be > 0",
                    self.kind()
                )))
            }
        };
        match *self {
            AlgorithmParams::Fxlms { mu } => check("mu", mu),
            AlgorithmParams::Fxgmcc { mu, sigma, p, nu }
            | AlgorithmParams::Ifxgmcc { mu, sigma, p, nu } => {
                check("mu", mu)?;
                check("sigma", sigma)?;
                check("p", p)?;
                check("nu", nu)
            }
            AlgorithmParams::Fxght {
                rho,
                lambda,
                p,
                sigma,
            } => {
                check("rho", rho)?;
                check("lambda", lambda)?;
                check("p", p)?;
                check("sigma", sigma)
            }
            AlgorithmParams::Fxech {
                gamma,
                mu,
                lambda,
                p,
            } => {
                check("mu", mu)?;
                check("lambda", lambda)?;
                check("p", p)?;
                if !(gamma > 1.0 && gamma.is_finite()) {
                    return Err(Error::config(format!("FXECH gamma = {gamma} must be > 1")));
                }
                Ok(())
            }
            AlgorithmParams::Fxgr { mu, zeta } => {
                check("mu", mu)?;
                check("zeta", zeta)
            }
            AlgorithmParams::Fxhekm(h) => h.validate(),
        }
    }

    /// Step size multiplying the score function.
    pub fn step_size(&self) -> f64 {
        match *self {
            AlgorithmParams::Fxlms { mu }
            | AlgorithmParams::Fxgmcc { mu, .. }
            | AlgorithmParams::Ifxgmcc { mu, .. }
            | AlgorithmParams::Fxech { mu, .. }
            | AlgorithmParams::Fxgr { mu, .. } => mu,
            AlgorithmParams::Fxght { rho, .. } => rho,
            AlgorithmParams::Fxhekm(h) => h.step_size(),
        }
    }

    /// Score function ψ(e). FXHEKM includes the gate and the normalization
    /// by `δ + ref_norm_sq`; the others ignore `ref_norm_sq`.
    pub fn score(&self, e: f64, ref_norm_sq: f64) -> f64 {
        match *self {
            AlgorithmParams::Fxlms { .. } => e,
            AlgorithmParams::Fxgmcc { sigma, p, nu, .. } => gen_kernel(e, sigma, p, nu),
            AlgorithmParams::Ifxgmcc { sigma, p, nu, .. } => {
                nu * p / sigma.powf(p) * gen_kernel(e, sigma, p, nu)
            }
            AlgorithmParams::Fxght {
                lambda, p, sigma, ..
            } => {
                if e == 0.0 {
                    return 0.0;
                }
                let sech = 1.0 / (lambda * e.abs().powf(p)).cosh();
                sigma * sech * sech * e.abs().powf(p - 1.0) * e.signum()
            }
            AlgorithmParams::Fxech {
                gamma, lambda, p, ..
            } => {
                if e == 0.0 {
                    return 0.0;
                }
                let u = e.abs().powf(p - 1.0) * e.signum();
                let ln_g = gamma.ln();
                ln_g * u.sinh() * (lambda * (u.cosh() - 1.0) * ln_g).exp()
            }
            AlgorithmParams::Fxgr { zeta, .. } => {
                if hekm_gate(e, zeta) {
                    e
                } else {
                    0.0
                }
            }
            AlgorithmParams::Fxhekm(h) => {
                if hekm_gate(e, h.zeta) {
                    hekm_phi(e, ref_norm_sq, &h)
                } else {
                    0.0
                }
            }
        }
    }

    /// M-estimate threshold for gated algorithms.
    fn gate(&self) -> Option<f64> {
        match *self {
            AlgorithmParams::Fxgr { zeta, .. } => Some(zeta),
            AlgorithmParams::Fxhekm(h) => Some(h.zeta),
            _ => None,
        }
    }
}

fn gen_kernel(e: f64, sigma: f64, p: f64, nu: f64) -> f64 {
    if e == 0.0 {
        return 0.0;
    }
    let mag = e.abs();
    (-nu * (mag / sigma).powf(p)).exp() * mag.powf(p - 1.0) * e.signum()
}

/// Mutable per-run controller state.
#[derive(Debug, Clone)]
pub struct Controller {
    weights: TapVector,
    reference: DelayLine,
    filtered_ref: DelayLine,
    params: AlgorithmParams,
    iteration: u64,
    diverged: bool,
}

impl Controller {
    /// Zero-weight controller with `len` taps.
    pub fn new(params: AlgorithmParams, len: usize) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            weights: TapVector::zeros(len)?,
            reference: DelayLine::new(len)?,
            filtered_ref: DelayLine::new(len)?,
            params,
            iteration: 0,
            diverged: false,
        })
    }

    pub fn kind(&self) -> AlgorithmKind {
        self.params.kind()
    }

    pub fn params(&self) -> &AlgorithmParams {
        &self.params
    }

    pub fn weights(&self) -> &TapVector {
        &self.weights
    }

    pub fn filtered_reference(&self) -> &DelayLine {
        &self.filtered_ref
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Pushes the reference sample and returns the antinoise `y = wᵀx(n)`.
    pub fn output(&mut self, x: f64) -> f64 {
        self.reference.push(x);
        dot(self.weights.as_slice(), self.reference.as_slice())
    }

    /// Pushes the filtered-reference sample `x'(n)`.
    pub fn push_filtered(&mut self, x_filtered: f64) {
        self.filtered_ref.push(x_filtered);
    }

    /// Applies one weight update with residual `e` against the current
    /// filtered-reference vector.
    pub fn update(&mut self, e: f64) {
        self.iteration += 1;
        if self.diverged {
            return;
        }
        if !e.is_finite() {
            self.diverged = true;
            return;
        }
        if let Some(zeta) = self.params.gate() {
            if !hekm_gate(e, zeta) {
                return;
            }
        }
        let ref_norm_sq = self.filtered_ref.norm_sq();
        let c = self.params.step_size() * self.params.score(e, ref_norm_sq);
        if c == 0.0 {
            return;
        }
        let before = self.weights.clone();
        let mut blown = !c.is_finite();
        if !blown {
            for (w, x) in self
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(self.filtered_ref.as_slice())
            {
                *w += c * x;
                if !w.is_finite() || w.abs() > DIVERGENCE_THRESHOLD {
                    blown = true;
                }
            }
        }
        if blown {
            self.weights = before;
            self.diverged = true;
        }
    }
}

/// FXHEKM update. Fails if the controller runs a different algorithm.
pub fn hekm_update(state: &mut Controller, e: f64) -> Result<()> {
    generic_fx_update(state, e, AlgorithmKind::Fxhekm)
}

/// Update through the shared interface, checking that `kind` matches the
/// controller's parameters.
pub fn generic_fx_update(state: &mut Controller, e: f64, kind: AlgorithmKind) -> Result<()> {
    if state.kind() != kind {
        return Err(Error::config(format!(
            "controller runs {} but {} update was requested",
            state.kind(),
            kind
        )));
    }
    state.update(e);
    Ok(())
}

/// Per-iteration record of one controller run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub e: Vec<f64>,
    pub d: Vec<f64>,
    pub y: Vec<f64>,
    pub x_filtered: Vec<f64>,
    /// `‖x'(n)‖²` at the moment of the update.
    pub ref_norm_sq: Vec<f64>,
    /// `‖w(n+1)‖₂` after the update.
    pub weight_norm: Vec<f64>,
    /// First iteration at which divergence was flagged.
    pub diverged_at: Option<usize>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Runs the closed loop for `n_iters` samples of reference `x` and
/// measurement noise `v`: antinoise, plant propagation, residual, update.
pub fn run_controller(
    plant: &mut PlantState,
    controller: &mut Controller,
    x: &[f64],
    v: &[f64],
    n_iters: usize,
) -> Result<Trace> {
    if x.len() < n_iters || v.len() < n_iters {
        return Err(Error::config(format!(
            "noise streams ({}, {}) shorter than {n_iters} iterations",
            x.len(),
            v.len()
        )));
    }
    let mut t = Trace {
        e: Vec::with_capacity(n_iters),
        d: Vec::with_capacity(n_iters),
        y: Vec::with_capacity(n_iters),
        x_filtered: Vec::with_capacity(n_iters),
        ref_norm_sq: Vec::with_capacity(n_iters),
        weight_norm: Vec::with_capacity(n_iters),
        diverged_at: None,
    };
    for n in 0..n_iters {
        let y = controller.output(x[n]);
        let s = plant.step(x[n], v[n], y);
        controller.push_filtered(s.x_filtered);
        t.ref_norm_sq.push(controller.filtered_ref.norm_sq());
        controller.update(s.e);
        if controller.diverged && t.diverged_at.is_none() {
            t.diverged_at = Some(n);
        }
        t.e.push(s.e);
        t.d.push(s.d);
        t.y.push(y);
        t.x_filtered.push(s.x_filtered);
        t.weight_norm.push(controller.weights.norm_sq().sqrt());
    }
    Ok(t)
}
