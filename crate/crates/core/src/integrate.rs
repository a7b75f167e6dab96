//! Adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Global subdivision: the interval with the largest error estimate is split
//! until the summed error falls below the requested tolerance.

use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::stats::NeumaierSum;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-10,
            abs: 0.0,
            max_intervals: 2000,
        }
    }
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Tolerance {
            rel,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        k += WGK[j] * pair;
        if j % 2 == 1 {
            g += WG[j / 2] * pair;
        }
    }
    Piece {
        a,
        b,
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::param("bounds", "integration bounds must be finite"));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            intervals: 0,
            evaluations: 0,
        });
    }
    let mut heap = BinaryHeap::new();
    let first = kronrod(&f, a, b);
    let mut evaluations = 15;
    heap.push(first);
    loop {
        let (value, error) = totals(&heap);
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Integration {
                estimate: value,
                error,
                requested: tol.rel,
                intervals: heap.len(),
            });
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(Integral {
                value,
                error,
                intervals: heap.len(),
                evaluations,
            });
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Integration {
                estimate: value,
                error,
                requested: tol.abs.max(tol.rel * value.abs()),
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        heap.push(kronrod(&f, worst.a, mid));
        heap.push(kronrod(&f, mid, worst.b));
        evaluations += 30;
    }
}

fn totals(heap: &BinaryHeap<Piece>) -> (f64, f64) {
    // Summed in interval order so the result does not depend on heap layout.
    let mut pieces: Vec<&Piece> = heap.iter().collect();
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut v = NeumaierSum::default();
    let mut e = NeumaierSum::default();
    for p in pieces {
        v.add(p.value);
        e.add(p.error);
    }
    (v.sum(), e.sum())
}

/// Integrates over the whole real line using ω = scale·tan θ.
///
/// `scale` should be the width of the integrand's central feature; the
/// integrand must decay faster than 1/ω.
pub fn integrate_real_line<F>(f: F, scale: f64, tol: Tolerance) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::param("scale", "must be positive and finite"));
    }
    let g = |theta: f64| {
        let c = theta.cos();
        if c <= 0.0 {
            return 0.0;
        }
        let w = scale * theta.tan();
        let v = f(w) * scale / (c * c);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, -FRAC_PI_2, FRAC_PI_2, tol)
}
