//! Seeded α-stable and Gaussian noise.
//!
//! The α-stable law is parameterized by its characteristic function
//!
//! ```text
//! φ(t) = exp{ jδt − γ|t|^α [1 + jβ·sign(t)·S(t, α)] }
//! S(t, α) = tan(απ/2)        α ≠ 1
//!         = (2/π)·log|t|     α = 1
//! ```
//!
//! with dispersion `γ` (so `α = 2` is Gaussian with variance `2γ`).
//! Draws come from the Chambers–Mallows–Stuck transform of one uniform
//! and one exponential variate, then get multiplied by a post-scale.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// α-stable parameters plus an amplitude post-multiplier and a seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Characteristic exponent, `(0, 2]`.
    pub alpha_s: f64,
    /// Symmetry, `[−1, 1]`.
    pub beta: f64,
    /// Dispersion, `> 0`.
    pub gamma: f64,
    /// Location.
    pub delta: f64,
    /// Post-multiplier applied to every draw, `≥ 0`.
    pub scale: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// Validated constructor.
    pub fn new(
        alpha_s: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            alpha_s,
            beta,
            gamma,
            delta,
            scale,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Standard symmetric law (`β = 0, γ = 1, δ = 0`) with the given
    /// exponent and post-scale.
    pub fn standard(alpha_s: f64, scale: f64, seed: u64) -> Result<Self> {
        Self::new(alpha_s, 0.0, 1.0, 0.0, scale, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_s > 0.0 && self.alpha_s <= 2.0) {
            return Err(Error::config(format!(
                "alpha_s = {} not in (0, 2]",
                self.alpha_s
            )));
        }
        if !(-1.0..=1.0).contains(&self.beta) {
            return Err(Error::config(format!(
                "beta = {} not in [-1, 1]",
                self.beta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma = {} must be > 0", self.gamma)));
        }
        if !self.delta.is_finite() {
            return Err(Error::config("delta must be finite"));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::config(format!(
                "scale = {} must be >= 0",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Streaming α-stable generator owning its RNG.
#[derive(Debug, Clone)]
pub struct AlphaStable {
    alpha: f64,
    // skewness in the usual `1 − jβ tan` convention
    beta_std: f64,
    sigma: f64,
    delta: f64,
    scale: f64,
    // CMS constants for α ≠ 1
    b: f64,
    s: f64,
    rng: ChaCha8Rng,
}

impl AlphaStable {
    pub fn new(spec: &NoiseSpec) -> Result<Self> {
        spec.validate()?;
        let alpha = spec.alpha_s;
        let unit = alpha == 1.0;
        // The module-level form uses `1 + jβ tan(απ/2)`; the CMS formulas are written
        // for `1 − jβ tan(απ/2)`, so β flips sign away from α = 1. At α = 1 both
        // forms carry `+β(2/π)log|t|`.
        let beta_std = if unit { spec.beta } else { -spec.beta };
        let sigma = spec.gamma.powf(1.0 / alpha);
        let (b, s) = if unit {
            (0.0, 1.0)
        } else {
            let t = beta_std * (alpha * FRAC_PI_2).tan();
            (t.atan() / alpha, (1.0 + t * t).powf(1.0 / (2.0 * alpha)))
        };
        Ok(Self {
            alpha,
            beta_std,
            sigma,
            delta: spec.delta,
            scale: spec.scale,
            b,
            s,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        })
    }

    /// Unit-dispersion, zero-location draw in the standard convention.
    fn standard_draw(&mut self) -> f64 {
        let u: f64 = Open01.sample(&mut self.rng);
        let v = PI * (u - 0.5);
        let mut w: f64 = Exp1.sample(&mut self.rng);
        if w <= 0.0 {
            w = f64::MIN_POSITIVE;
        }
        let a = self.alpha;
        if a == 1.0 {
            let beta = self.beta_std;
            let h = FRAC_PI_2 + beta * v;
            (h * v.tan() - beta * ((FRAC_PI_2 * w * v.cos()) / h).ln()) / FRAC_PI_2
        } else {
            let av = a * (v + self.b);
            self.s * av.sin() / v.cos().powf(1.0 / a) * ((v - av).cos() / w).powf((1.0 - a) / a)
        }
    }

    pub fn next_sample(&mut self) -> f64 {
        let x = self.standard_draw();
        let shifted = if self.alpha == 1.0 {
            self.sigma * x + (2.0 / PI) * self.beta_std * self.sigma * self.sigma.ln() + self.delta
        } else {
            self.sigma * x + self.delta
        };
        self.scale * shifted
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = self.next_sample());
    }
}

/// `n` i.i.d. draws from the law in `spec`, each multiplied by `spec.scale`.
pub fn sample_alpha_stable(spec: &NoiseSpec, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::config("sample count must be at least 1"));
    }
    let mut g = AlphaStable::new(spec)?;
    let mut out = vec![0.0; n];
    g.fill(&mut out);
    Ok(out)
}

/// `n` i.i.d. `N(0, sigma²)` draws.
pub fn sample_gaussian(sigma: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("sigma = {sigma} must be >= 0")));
    }
    if n == 0 {
        return Err(Error::config("sample count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sigma * z
        })
        .collect())
}

/// Mixes a base seed and a stream index into an independent 64-bit seed
/// (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Empirical characteristic function `(1/n)·Σ exp(j·t·x)` as `(re, im)`.
pub fn empirical_cf(samples: &[f64], t: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let (re, im) = samples.iter().fold((0.0, 0.0), |(re, im), &x| {
        (re + (t * x).cos(), im + (t * x).sin())
    });
    (re / n, im / n)
}

/// Characteristic function of [`NoiseSpec`] at `t` (ignores `scale`).
pub fn characteristic_function(spec: &NoiseSpec, t: f64) -> (f64, f64) {
    if t == 0.0 {
        return (1.0, 0.0);
    }
    let a = spec.alpha_s;
    let skew = if a == 1.0 {
        (2.0 / PI) * t.abs().ln()
    } else {
        (a * FRAC_PI_2).tan()
    };
    let mag = spec.gamma * t.abs().powf(a);
    let re_exp = -mag;
    let im_exp = spec.delta * t - mag * spec.beta * t.signum() * skew;
    let m = re_exp.exp();
    (m * im_exp.cos(), m * im_exp.sin())
}
