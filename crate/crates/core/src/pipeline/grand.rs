//! Matched filtering of the rebinned spectrum into the grand spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mad_sigma, median, NeumaierSum};
use crate::synth::lorentzian_mass;

use super::stages::BinnedSpectrum;

/// Bin-averaged Lorentzian template over `k` bins of width `bin_width`,
/// centred on the middle bin and normalized to unit sum.
pub fn lorentzian_weights(k: usize, bin_width: f64, fwhm: f64) -> Result<Vec<f64>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::param("K_g", "must be odd"));
    }
    if !(fwhm > 0.0 && bin_width > 0.0) {
        return Err(Error::param("linewidth", "must be positive"));
    }
    let half = (k / 2) as f64;
    let raw: Vec<f64> = (0..k)
        .map(|j| {
            let c = (j as f64 - half) * bin_width;
            lorentzian_mass(c - bin_width / 2.0, c + bin_width / 2.0, 0.0, fwhm)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.iter().map(|w| w / total).collect())
}

/// Matched-filter statistic for each window position where the full
/// template fits. Returns `(centre index, z, weight sum)`; positions with no
/// weight are skipped.
pub fn matched_filter(s: &BinnedSpectrum, template: &[f64]) -> Result<Vec<(usize, f64, f64)>> {
    let k = template.len();
    if s.len() < k {
        return Err(Error::BandTooNarrow {
            have: s.len(),
            need: k,
        });
    }
    let half = k / 2;
    let mut out = Vec::with_capacity(s.len() - k + 1);
    for j in half..s.len() - half {
        let (mut num, mut den) = (NeumaierSum::default(), NeumaierSum::default());
        for (o, &l) in template.iter().enumerate() {
            let i = j + o - half;
            let w = s.inv_var[i];
            if w > 0.0 {
                num.add(l * w * s.values[i]);
                den.add(l * l * w);
            }
        }
        let d = den.sum();
        if d > 0.0 {
            out.push((j, num.sum() / d.sqrt(), d));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrandSpectrum {
    pub freqs_hz: Vec<f64>,
    /// Excess in units of the grand-spectrum standard deviation.
    pub values: Vec<f64>,
    /// Raw spectrum bins behind the centre bin.
    pub counts: Vec<u32>,
    pub bin_width: f64,
    /// Robust location and scale removed from the raw statistic.
    pub raw_median: f64,
    pub raw_sigma: f64,
}

impl GrandSpectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the bin whose span contains `freq_hz`.
    pub fn bin_of(&self, freq_hz: f64) -> Result<usize> {
        let outside = || Error::OutsideSpan {
            freq_hz,
            lo_hz: self.freqs_hz.first().copied().unwrap_or(f64::NAN) - self.bin_width / 2.0,
            hi_hz: self.freqs_hz.last().copied().unwrap_or(f64::NAN) + self.bin_width / 2.0,
        };
        let first = *self.freqs_hz.first().ok_or_else(outside)?;
        let pos = ((freq_hz - first) / self.bin_width).round();
        if !(pos >= 0.0) {
            return Err(outside());
        }
        // bins with no weight were dropped, so look the frequency up
        let target = first + pos * self.bin_width;
        let i = self
            .freqs_hz
            .partition_point(|&f| f < target - self.bin_width / 4.0);
        match self.freqs_hz.get(i) {
            Some(&f) if (f - target).abs() < self.bin_width / 4.0 => Ok(i),
            _ => Err(outside()),
        }
    }
}

/// Matched-filtered, robustly normalized grand spectrum. Bins within
/// `K_g` of `exclude_hz` are left out of the normalization statistics.
pub fn grand(s: &BinnedSpectrum, template: &[f64], exclude_hz: Option<f64>) -> Result<GrandSpectrum> {
    let raw = matched_filter(s, template)?;
    if raw.is_empty() {
        return Err(Error::InsufficientData("no weighted grand-spectrum bins".into()));
    }
    let reach = template.len() as f64 * s.bin_width;
    let clean: Vec<f64> = raw
        .iter()
        .filter(|(j, _, _)| exclude_hz.is_none_or(|x| (s.freq(*j) - x).abs() > reach))
        .map(|r| r.1)
        .collect();
    if clean.len() < 3 {
        return Err(Error::InsufficientData(
            "too few bins outside the excluded region to normalize".into(),
        ));
    }
    let med = median(&clean);
    let sigma = mad_sigma(&clean);
    if !(sigma > 0.0) {
        return Err(Error::Degenerate("grand spectrum has zero spread".into()));
    }
    Ok(GrandSpectrum {
        freqs_hz: raw.iter().map(|r| s.freq(r.0)).collect(),
        values: raw.iter().map(|r| (r.1 - med) / sigma).collect(),
        counts: raw.iter().map(|r| s.counts[r.0]).collect(),
        bin_width: s.bin_width,
        raw_median: med,
        raw_sigma: sigma,
    })
}

/// Grand-spectrum excess at the bin containing `freq_hz`.
pub fn measure_at(g: &GrandSpectrum, freq_hz: f64) -> Result<f64> {
    Ok(g.values[g.bin_of(freq_hz)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_standard_normal, mean, skewness, std_dev};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> BinnedSpectrum {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BinnedSpectrum {
            start_hz: 500.0,
            bin_width: 1000.0,
            values: (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
            inv_var: vec![1.0; n],
            counts: vec![10; n],
        }
    }

    #[test]
    fn weights_are_normalized_and_symmetric() {
        let w = lorentzian_weights(41, 1000.0, 9e3).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for j in 0..20 {
            assert!((w[j] - w[40 - j]).abs() < 1e-15);
        }
        assert!(w[20] > w[19] && w[19] > w[0]);
        assert!(lorentzian_weights(40, 1000.0, 9e3).is_err());
    }

    #[test]
    fn pure_noise_grand_is_standard_normal() {
        let s = noise(30_000, 1);
        let w = lorentzian_weights(41, 1000.0, 9e3).unwrap();
        let g = grand(&s, &w, None).unwrap();
        assert_eq!(g.len(), 30_000 - 40);
        assert!(mean(&g.values).abs() < 0.05);
        let sd = std_dev(&g.values);
        assert!((0.9..1.1).contains(&sd), "{sd}");
        // adjacent grand bins overlap, so test a decimated subset
        let thin: Vec<f64> = g.values.iter().step_by(41).copied().collect();
        assert!(ks_standard_normal(&thin).p_value > 1e-3);
        assert!(skewness(&g.values).abs() < 0.1);
        assert!((g.raw_sigma - 1.0).abs() < 0.05);
    }

    #[test]
    fn matched_template_maximizes_expected_snr() {
        let n = 201;
        let fwhm = 9e3;
        let truth = lorentzian_weights(41, 1000.0, fwhm).unwrap();
        let mut s = noise(n, 0);
        s.values.iter_mut().for_each(|v| *v = 0.0);
        for (o, t) in truth.iter().enumerate() {
            s.values[80 + o] = *t;
        }
        let z_at = |tpl: &[f64]| {
            matched_filter(&s, tpl)
                .unwrap()
                .into_iter()
                .find(|r| r.0 == 100)
                .unwrap()
                .1
        };
        let best = z_at(&truth);
        for other in [2e3, 5e3, 15e3, 30e3] {
            let t = lorentzian_weights(41, 1000.0, other).unwrap();
            assert!(z_at(&t) < best, "{other}");
        }
        let flat = vec![1.0 / 41.0; 41];
        assert!(z_at(&flat) < best);
        // Cauchy-Schwarz bound is attained
        let bound = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
        assert!((best - bound).abs() < 1e-14);
    }

    #[test]
    fn injected_signal_is_excluded_from_normalization() {
        let mut s = noise(5000, 3);
        let w = lorentzian_weights(41, 1000.0, 9e3).unwrap();
        let amp = 50.0;
        for (o, t) in w.iter().enumerate() {
            s.values[2480 + o] += amp * t;
        }
        let f = s.freq(2500);
        let g = grand(&s, &w, Some(f)).unwrap();
        let z = measure_at(&g, f).unwrap();
        let expect = amp * w.iter().map(|t| t * t).sum::<f64>().sqrt();
        assert!((z - expect).abs() < 4.0, "{z} vs {expect}");
        assert!(measure_at(&g, s.freq(5)).is_err());
        assert!(measure_at(&g, -1e6).is_err());
    }

    #[test]
    fn too_narrow() {
        let s = noise(30, 0);
        let w = lorentzian_weights(41, 1000.0, 9e3).unwrap();
        assert!(matches!(grand(&s, &w, None), Err(Error::BandTooNarrow { .. })));
    }
}
