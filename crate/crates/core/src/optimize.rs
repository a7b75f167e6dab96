//! One-dimensional maximization.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`,
/// stopping when the bracket is narrower than `xtol`.
///
/// A coarse pre-scan rejects objectives that are flat to 1e-10 relative.
pub fn golden_max<F>(f: F, lo: f64, hi: f64, xtol: f64) -> Result<Maximum>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(lo < hi) {
        return Err(Error::param("interval", format!("[{lo}, {hi}] is empty")));
    }
    let mut evaluations = 0;
    let probe: Vec<f64> = (0..9)
        .map(|i| {
            evaluations += 1;
            f(lo + (hi - lo) * i as f64 / 8.0)
        })
        .collect::<Result<_>>()?;
    let pmax = probe.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pmin = probe.iter().cloned().fold(f64::INFINITY, f64::min);
    let variation = (pmax - pmin) / pmax.abs().max(f64::MIN_POSITIVE);
    if variation < 1e-10 {
        return Err(Error::DegenerateObjective { variation });
    }

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    evaluations += 2;
    while (b - a).abs() > xtol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
        evaluations += 1;
        if evaluations > 10_000 {
            break;
        }
    }
    let (x, value) = if fc > fd { (c, fc) } else { (d, fd) };
    Ok(Maximum {
        x,
        value,
        evaluations,
    })
}
