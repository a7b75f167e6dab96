//! Small statistics toolbox: compensated sums, moments, robust scale and
//! Kolmogorov–Smirnov tests.

use statrs::distribution::{ContinuousCDF, Normal};

/// Neumaier's compensated summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn sum(xs: &[f64]) -> f64 {
    let mut s = NeumaierSum::default();
    xs.iter().for_each(|&x| s.add(x));
    s.sum()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    sum(xs) / xs.len() as f64
}

/// Sample variance (n − 1 denominator).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let mut s = NeumaierSum::default();
    xs.iter().for_each(|&x| s.add((x - m) * (x - m)));
    s.sum() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Sample skewness (biased, moment estimator).
pub fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let (mut m2, mut m3) = (NeumaierSum::default(), NeumaierSum::default());
    for &x in xs {
        let d = x - m;
        m2.add(d * d);
        m3.add(d * d * d);
    }
    let m2 = m2.sum() / n;
    (m3.sum() / n) / m2.powf(1.5)
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation scaled to estimate a Gaussian σ.
pub fn mad_sigma(xs: &[f64]) -> f64 {
    let m = median(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m).abs()).collect();
    1.482_602_218_505_602 * median(&dev)
}

/// Asymptotic Kolmogorov distribution tail, P(K > x).
fn kolmogorov_tail(x: f64) -> f64 {
    if x < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * x * x).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> KsResult {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sq = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d),
    }
}

/// KS test against the standard normal.
pub fn ks_standard_normal(xs: &[f64]) -> KsResult {
    let n = Normal::standard();
    ks_one_sample(xs, |x| n.cdf(x))
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d),
    }
}

/// Pearson correlation coefficient.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (
        NeumaierSum::default(),
        NeumaierSum::default(),
        NeumaierSum::default(),
    );
    for (&x, &y) in a.iter().zip(b) {
        sab.add((x - ma) * (y - mb));
        saa.add((x - ma) * (x - ma));
        sbb.add((y - mb) * (y - mb));
    }
    sab.sum() / (saa.sum() * sbb.sum()).sqrt()
}
