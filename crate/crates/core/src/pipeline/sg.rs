//! Savitzky–Golay smoothing with truncated (unpadded) edge windows.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgParams {
    pub degree: usize,
    pub half_width: usize,
}

impl SgParams {
    pub fn new(degree: usize, half_width: usize) -> Self {
        SgParams { degree, half_width }
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_width <= self.degree {
            return Err(Error::param("half_width", "must exceed the polynomial degree"));
        }
        Ok(())
    }
}

/// Least-squares weights that evaluate a degree-`d` fit over a window of
/// `m` consecutive points at position `t`.
fn window_weights(m: usize, t: usize, degree: usize) -> Vec<f64> {
    let cols = degree + 1;
    let scale = if m > 1 { (m - 1) as f64 } else { 1.0 };
    // Legendre basis on [-1, 1] keeps the design matrix well conditioned.
    let v = DMatrix::from_fn(m, cols, |j, k| {
        let u = (2.0 * j as f64 - scale) / scale;
        legendre(k, u)
    });
    let q = v.qr().q();
    (0..m)
        .map(|j| (0..cols).map(|k| q[(t, k)] * q[(j, k)]).sum())
        .collect()
}

fn legendre(k: usize, u: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, u);
    if k == 0 {
        return p0;
    }
    for n in 1..k {
        let n = n as f64;
        let p2 = ((2.0 * n + 1.0) * u * p1 - n * p0) / (n + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Precomputed filter for series of a fixed length.
#[derive(Clone)]
pub struct SgKernel {
    n: usize,
    params: SgParams,
    edge_rows: Vec<Vec<f64>>,
    interior: Vec<f64>,
    fft_len: usize,
    kernel_spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SgKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SgKernel")
            .field("n", &self.n)
            .field("params", &self.params)
            .finish()
    }
}

impl SgKernel {
    pub fn new(n: usize, params: SgParams) -> Result<Self> {
        params.validate()?;
        if n <= params.degree + 1 {
            return Err(Error::InsufficientData(format!(
                "series of length {n} cannot support a degree-{} fit",
                params.degree
            )));
        }
        let w = params.half_width;
        let (edge_rows, interior) = if n >= 2 * w + 1 {
            let edges = (0..w).map(|i| window_weights(i + w + 1, i, params.degree)).collect();
            (edges, window_weights(2 * w + 1, w, params.degree))
        } else {
            (Vec::new(), Vec::new())
        };
        let fft_len = (n + 2 * w).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let mut kernel_spectrum = vec![Complex64::new(0.0, 0.0); fft_len];
        for (j, &c) in interior.iter().enumerate() {
            kernel_spectrum[j] = Complex64::new(c, 0.0);
        }
        if !interior.is_empty() {
            forward.process(&mut kernel_spectrum);
        }
        Ok(SgKernel {
            n,
            params,
            edge_rows,
            interior,
            fft_len,
            kernel_spectrum,
            forward,
            inverse,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn params(&self) -> SgParams {
        self.params
    }

    /// Sum of squared interior weights: the variance reduction applied to
    /// white noise away from the edges.
    pub fn interior_noise_gain(&self) -> f64 {
        self.interior.iter().map(|c| c * c).sum()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::InvalidSignal(format!(
                "filter built for length {}, got {}",
                self.n,
                x.len()
            )));
        }
        if self.interior.is_empty() {
            return Ok(self.apply_direct(x));
        }
        let n = self.n;
        let w = self.params.half_width;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_spectrum) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        let norm = 1.0 / self.fft_len as f64;
        let mut out = vec![0.0; n];
        for i in w..n - w {
            out[i] = buf[i + w].re * norm;
        }
        for (i, row) in self.edge_rows.iter().enumerate() {
            out[i] = row.iter().zip(x).map(|(c, v)| c * v).sum();
            out[n - 1 - i] = row.iter().zip(x.iter().rev()).map(|(c, v)| c * v).sum();
        }
        Ok(out)
    }

    fn apply_direct(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let w = self.params.half_width;
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(w);
                let hi = (i + w + 1).min(n);
                let c = window_weights(hi - lo, i - lo, self.params.degree);
                c.iter().zip(&x[lo..hi]).map(|(c, v)| c * v).sum()
            })
            .collect()
    }

    /// Baseline ignoring the bins where `keep` is false: masked bins are
    /// repeatedly replaced by the current fit and the filter re-applied.
    pub fn apply_masked(&self, x: &[f64], keep: &[bool], iterations: usize) -> Result<Vec<f64>> {
        if keep.len() != x.len() {
            return Err(Error::InvalidSignal("mask length differs from series".into()));
        }
        if keep.iter().all(|&k| k) {
            return self.apply(x);
        }
        if !keep.iter().any(|&k| k) {
            return Err(Error::InsufficientData("every bin is masked".into()));
        }
        let mut y = interpolate_masked(x, keep);
        let mut base = self.apply(&y)?;
        for _ in 0..iterations {
            for i in 0..y.len() {
                if !keep[i] {
                    y[i] = base[i];
                }
            }
            base = self.apply(&y)?;
        }
        Ok(base)
    }
}

/// Linear interpolation across masked runs (constant extension at the ends).
fn interpolate_masked(x: &[f64], keep: &[bool]) -> Vec<f64> {
    let mut y = x.to_vec();
    let mut last: Option<usize> = None;
    let mut i = 0;
    while i < x.len() {
        if keep[i] {
            last = Some(i);
            i += 1;
            continue;
        }
        let start = i;
        while i < x.len() && !keep[i] {
            i += 1;
        }
        let next = if i < x.len() { Some(i) } else { None };
        for (j, v) in y.iter_mut().enumerate().take(i).skip(start) {
            *v = match (last, next) {
                (Some(a), Some(b)) => x[a] + (x[b] - x[a]) * (j - a) as f64 / (b - a) as f64,
                (Some(a), None) => x[a],
                (None, Some(b)) => x[b],
                (None, None) => unreachable!(),
            };
        }
    }
    y
}

/// One-shot convenience wrapper around [`SgKernel`].
pub fn sg_filter(series: &[f64], degree: usize, half_width: usize) -> Result<Vec<f64>> {
    SgKernel::new(series.len(), SgParams::new(degree, half_width))?.apply(series)
}
