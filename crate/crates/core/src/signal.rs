//! Sample-by-sample FIR machinery: tap vectors, delay lines and streaming
//! convolution.
//!
//! Everything here runs in `f64` with zero initial state. A [`DelayLine`]
//! keeps the newest sample at index 0, so the inner product of a
//! [`TapVector`] with the line is exactly `wᵀx(n)` with
//! `x(n) = [x(n), x(n-1), …, x(n-L+1)]ᵀ`.

use std::ops::Index;

use crate::error::{Error, Result};

/// Fixed-length sequence of real coefficients.
///
/// Used both for adaptive weights and for path impulse responses.
#[derive(Debug, Clone, PartialEq)]
pub struct TapVector(Vec<f64>);

impl TapVector {
    /// Wraps `taps`. Fails on an empty slice or any non-finite entry.
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::config("tap vector must have at least one tap"));
        }
        if let Some(i) = taps.iter().position(|t| !t.is_finite()) {
            return Err(Error::config(format!("tap {i} is not finite")));
        }
        Ok(Self(taps))
    }

    /// All-zero vector of length `len` (`len` must be ≥ 1).
    pub fn zeros(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::config("tap vector must have at least one tap"));
        }
        Ok(Self(vec![0.0; len]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Mutable access for in-place adaptation. The length cannot change.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|t| t * t).sum()
    }

    /// Returns a copy with every tap multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self(self.0.iter().map(|t| t * gain).collect())
    }

    /// Polynomial product of the two coefficient sequences.
    pub fn convolve(&self, other: &TapVector) -> TapVector {
        TapVector(convolve(&self.0, &other.0))
    }
}

impl Index<usize> for TapVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Most-recent-first sample buffer of fixed capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    buf: Vec<f64>,
}

impl DelayLine {
    /// Zero-filled line holding `capacity` samples (≥ 1).
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("delay line capacity must be at least 1"));
        }
        Ok(Self {
            buf: vec![0.0; capacity],
        })
    }

    pub fn capacity(&self) -> usize {
        self.buf.len()
    }

    /// Shifts every sample one slot older, dropping the oldest, and stores
    /// `sample` at index 0.
    pub fn push(&mut self, sample: f64) {
        let n = self.buf.len();
        self.buf.copy_within(0..n - 1, 1);
        self.buf[0] = sample;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.buf
    }

    pub fn norm_sq(&self) -> f64 {
        self.buf.iter().map(|x| x * x).sum()
    }

    /// `Σ taps[k]·buffer[k]`. Lengths must match.
    pub fn dot(&self, taps: &TapVector) -> Result<f64> {
        if taps.len() != self.buf.len() {
            return Err(Error::config(format!(
                "tap length {} does not match delay line capacity {}",
                taps.len(),
                self.buf.len()
            )));
        }
        Ok(dot(taps.as_slice(), &self.buf))
    }

    pub fn clear(&mut self) {
        self.buf.iter_mut().for_each(|x| *x = 0.0);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pushes `sample` into `line` and returns the filter output `Σ taps[k]·line[k]`.
pub fn push_and_dot(line: &mut DelayLine, sample: f64, taps: &TapVector) -> Result<f64> {
    if taps.len() != line.capacity() {
        return Err(Error::config(format!(
            "tap length {} does not match delay line capacity {}",
            taps.len(),
            line.capacity()
        )));
    }
    line.push(sample);
    Ok(dot(taps.as_slice(), line.as_slice()))
}

/// Streaming single-input single-output FIR filter with zero initial state.
#[derive(Debug, Clone)]
pub struct FirFilter {
    taps: TapVector,
    line: DelayLine,
}

impl FirFilter {
    pub fn new(taps: TapVector) -> Self {
        let line = DelayLine {
            buf: vec![0.0; taps.len()],
        };
        Self { taps, line }
    }

    /// Feeds one sample and returns `Σ_k taps[k]·u(n−k)`.
    pub fn process(&mut self, sample: f64) -> f64 {
        self.line.push(sample);
        dot(self.taps.as_slice(), self.line.as_slice())
    }

    /// Runs a whole block through the filter, continuing from the current state.
    pub fn process_block(&mut self, input: &[f64]) -> Vec<f64> {
        input.iter().map(|&u| self.process(u)).collect()
    }

    pub fn taps(&self) -> &TapVector {
        &self.taps
    }

    /// Most recent input samples, newest first.
    pub fn history(&self) -> &DelayLine {
        &self.line
    }

    pub fn reset(&mut self) {
        self.line.clear();
    }
}

/// Builds a streaming convolution by `taps`.
pub fn convolve_stream(taps: TapVector) -> FirFilter {
    FirFilter::new(taps)
}

/// Full linear convolution of two finite sequences (length `a+b−1`).
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::primary_taps;

    fn impulse(n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        v
    }

    #[test]
    fn identity_filter_passes_input() {
        let mut line = DelayLine::new(3).unwrap();
        let taps = TapVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(push_and_dot(&mut line, 5.0, &taps).unwrap(), 5.0);
        assert_eq!(push_and_dot(&mut line, 7.0, &taps).unwrap(), 7.0);
    }

    #[test]
    fn primary_path_impulse_response() {
        let taps = primary_taps();
        let mut line = DelayLine::new(taps.len()).unwrap();
        let out: Vec<f64> = impulse(7)
            .into_iter()
            .map(|u| push_and_dot(&mut line, u, &taps).unwrap())
            .collect();
        assert_eq!(out, vec![0.0, 0.0, 0.25, 0.5, 1.0, 0.5, 0.25]);
    }

    #[test]
    fn length_mismatch_is_config_error() {
        let mut line = DelayLine::new(4).unwrap();
        let taps = TapVector::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            push_and_dot(&mut line, 1.0, &taps),
            Err(Error::Config(_))
        ));
        assert!(line.dot(&taps).is_err());
    }

    #[test]
    fn push_shifts_and_discards_oldest() {
        let mut line = DelayLine::new(3).unwrap();
        assert_eq!(line.as_slice(), &[0.0, 0.0, 0.0]);
        for s in [1.0, 2.0, 3.0, 4.0] {
            line.push(s);
        }
        assert_eq!(line.as_slice(), &[4.0, 3.0, 2.0]);
    }

    #[test]
    fn scalar_gain_stream() {
        let mut f = convolve_stream(TapVector::new(vec![0.5]).unwrap());
        assert_eq!(f.process_block(&[2.0, 4.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn secondary_path_is_half_primary() {
        let mut f = convolve_stream(primary_taps().scaled(0.5));
        assert_eq!(
            f.process_block(&impulse(7)),
            vec![0.0, 0.0, 0.125, 0.25, 0.5, 0.25, 0.125]
        );
    }

    #[test]
    fn rejects_empty_and_non_finite_taps() {
        assert!(TapVector::new(vec![]).is_err());
        assert!(TapVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(TapVector::zeros(0).is_err());
        assert!(DelayLine::new(0).is_err());
    }
}
