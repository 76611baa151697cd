//! Filtered-x active noise control under impulsive noise.
//!
//! The crate models a single-channel feedforward ANC plant (primary and
//! secondary FIR paths, offline secondary-path identification), an α-stable
//! noise generator, seven filtered-x adaptive controllers including the
//! hyperbolic-tangent exponential kernel M-estimator (FXHEKM), the steady-state
//! theory for FXHEKM, ensemble metrics, and a seeded Monte Carlo harness.
//!
//! ```
//! use robust_anc::{harness, AlgorithmKind};
//!
//! let mut cfg = harness::scenario1();
//! cfg.n_iters = 2000;
//! cfg.n_trials = 2;
//! let res = harness::run_experiment(&cfg).unwrap();
//! let hekm = res.algorithm(AlgorithmKind::Fxhekm).unwrap();
//! assert!(hekm.anr_plateau().unwrap() < -10.0);
//! ```

pub mod algorithms;
pub mod analysis;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod noise;
pub mod paths;
pub mod signal;

pub use algorithms::{AlgorithmKind, AlgorithmParams, Controller, HekmParams, Trace};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, ExperimentResult};
pub use metrics::MetricSeries;
pub use noise::NoiseSpec;
pub use paths::{PathModel, PlantState};
pub use signal::{DelayLine, FirFilter, TapVector};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/plant.md")]
    mod plant {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/fxhekm.md")]
    mod fxhekm {}
    #[doc = include_str!("../../../book/src/competitors.md")]
    mod competitors {}
    #[doc = include_str!("../../../book/src/theory.md")]
    mod theory {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
