//! Individual processing stages, from folded raw spectra to the rebinned
//! combined spectrum.

use serde::{Deserialize, Serialize};

use crate::constants::angular;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::network::NetworkParams;
use crate::stats::NeumaierSum;
use crate::synth::SynthConfig;

use super::sg::SgKernel;

/// Splits each folded bin equally between +f and −f.
///
/// Layout of the result: index `t` has frequency `(t − N + ½)·Δb` for `N`
/// folded bins, so the first half holds negative frequencies.
pub fn symmetrize(folded: &[f64]) -> Vec<f64> {
    let n = folded.len();
    let mut out = vec![0.0; 2 * n];
    for (k, &v) in folded.iter().enumerate() {
        out[n + k] = v / 2.0;
        out[n - 1 - k] = v / 2.0;
    }
    out
}

/// Inverse of [`symmetrize`]: adds the ±f entries back together.
pub fn fold(two_sided: &[f64]) -> Result<Vec<f64>> {
    if two_sided.len() % 2 != 0 {
        return Err(Error::InvalidSignal("two-sided spectrum must have even length".into()));
    }
    let n = two_sided.len() / 2;
    Ok((0..n).map(|k| two_sided[n + k] + two_sided[n - 1 - k]).collect())
}

/// Bin centres of a two-sided spectrum built from `n_half` folded bins, Hz.
pub fn two_sided_freqs(n_half: usize, bin_width: f64) -> Vec<f64> {
    (0..2 * n_half)
        .map(|t| (t as f64 - n_half as f64 + 0.5) * bin_width)
        .collect()
}

/// Per-bin average over spectra at fixed real frequency.
pub fn real_frequency_mean(spectra: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = spectra
        .first()
        .ok_or_else(|| Error::InsufficientData("no spectra".into()))?;
    let n = first.len();
    let mut acc = vec![NeumaierSum::default(); n];
    for s in spectra {
        if s.len() != n {
            return Err(Error::InvalidSignal("spectra have different lengths".into()));
        }
        acc.iter_mut().zip(s).for_each(|(a, &v)| a.add(v));
    }
    let m = spectra.len() as f64;
    Ok(acc.iter().map(|a| a.sum() / m).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMask {
    pub keep: Vec<bool>,
    /// Bins that exceeded the threshold themselves (before neighbour growth).
    pub offenders: Vec<usize>,
}

impl BinMask {
    pub fn all(n: usize) -> Self {
        BinMask {
            keep: vec![true; n],
            offenders: Vec::new(),
        }
    }

    pub fn retained_fraction(&self) -> f64 {
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len().max(1) as f64
    }
}

/// Flags bins whose baseline-normalized mean exceeds `threshold·sigma`,
/// together with `neighbors` bins on each side.
pub fn reject_bins(
    mean: &[f64],
    baseline: &[f64],
    sigma: f64,
    threshold: f64,
    neighbors: usize,
    max_fraction: f64,
) -> Result<BinMask> {
    if mean.len() != baseline.len() {
        return Err(Error::InvalidSignal("baseline length differs from spectrum".into()));
    }
    let n = mean.len();
    let mut keep = vec![true; n];
    let mut offenders = Vec::new();
    for i in 0..n {
        if baseline[i] <= 0.0 {
            return Err(Error::Degenerate(format!("non-positive baseline at bin {i}")));
        }
        if mean[i] / baseline[i] - 1.0 > threshold * sigma {
            offenders.push(i);
            let lo = i.saturating_sub(neighbors);
            let hi = (i + neighbors + 1).min(n);
            keep[lo..hi].iter_mut().for_each(|k| *k = false);
        }
    }
    let mask = BinMask { keep, offenders };
    let rejected = 1.0 - mask.retained_fraction();
    if rejected > max_fraction {
        return Err(Error::Contamination {
            fraction: rejected,
            limit: max_fraction,
        });
    }
    Ok(mask)
}

/// Divides a spectrum by the shared baseline, then by its own smooth
/// profile, and subtracts one. Masked bins come back as NaN.
pub fn process_spectrum(
    spectrum: &[f64],
    baseline: &[f64],
    keep: &[bool],
    second: &SgKernel,
) -> Result<Vec<f64>> {
    let n = spectrum.len();
    if baseline.len() != n || keep.len() != n {
        return Err(Error::InvalidSignal("stage inputs have different lengths".into()));
    }
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        if keep[i] {
            if !(baseline[i] > 0.0) {
                return Err(Error::Degenerate(format!("non-positive baseline at bin {i}")));
            }
            y.push(spectrum[i] / baseline[i]);
        } else {
            y.push(1.0);
        }
    }
    let profile = second.apply(&y)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if !keep[i] {
            out.push(f64::NAN);
            continue;
        }
        if !(profile[i] > 0.0) {
            return Err(Error::Degenerate(format!(
                "non-positive second-pass profile at bin {i}"
            )));
        }
        out.push(y[i] / profile[i] - 1.0);
    }
    Ok(out)
}

/// Relative sensitivity of each two-sided IF bin to a faxion, normalized to
/// a maximum of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityProfile {
    pub freqs_hz: Vec<f64>,
    pub values: Vec<f64>,
}

impl VisibilityProfile {
    pub fn flat(n_two_sided: usize, bin_width: f64) -> Self {
        VisibilityProfile {
            freqs_hz: two_sided_freqs(n_two_sided / 2, bin_width),
            values: vec![1.0; n_two_sided],
        }
    }

    /// Signal transfer at the bin's rf detuning over the folded noise of
    /// that bin, including the receiver's added noise. This is the lossy
    /// visibility with the image-band and receiver terms that the
    /// synthesized spectra carry.
    pub fn from_model(p: &NetworkParams, synth: &SynthConfig) -> Result<Self> {
        p.validate()?;
        synth.validate()?;
        let n = synth.n_bins();
        let freqs = two_sided_freqs(n, synth.bin_width);
        let kt = p.kappa_t();
        let raw: Vec<f64> = freqs
            .iter()
            .map(|&f| {
                let w = angular(synth.lo_offset + f);
                let transfer = p.lambda_t * p.kappa_m / (kt * kt / 4.0 + w * w);
                transfer / super::folded_noise_at(p, synth, f)
            })
            .collect();
        let max = raw.iter().cloned().fold(0.0, f64::max);
        if !(max > 0.0) {
            return Err(Error::Degenerate("visibility profile vanishes".into()));
        }
        Ok(VisibilityProfile {
            freqs_hz: freqs,
            values: raw.iter().map(|v| v / max).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Values with their inverse variances; zero weight marks an unusable bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weighted {
    pub values: Vec<f64>,
    pub inv_var: Vec<f64>,
}

/// Divides by the visibility profile and propagates the per-bin variance.
/// Bins below `floor` (relative to the profile maximum) are excluded.
pub fn rescale(
    processed: &[f64],
    profile: &VisibilityProfile,
    base_variance: f64,
    floor: f64,
) -> Result<Weighted> {
    if processed.len() != profile.len() {
        return Err(Error::InvalidSignal("profile length differs from spectrum".into()));
    }
    let max = profile.values.iter().cloned().fold(0.0, f64::max);
    let mut values = Vec::with_capacity(processed.len());
    let mut inv_var = Vec::with_capacity(processed.len());
    for (&x, &v) in processed.iter().zip(&profile.values) {
        if x.is_finite() && v >= floor * max && v > 0.0 {
            values.push(x / v);
            inv_var.push(v * v / base_variance);
        } else {
            values.push(0.0);
            inv_var.push(0.0);
        }
    }
    Ok(Weighted { values, inv_var })
}

/// Uniformly gridded spectrum with inverse-variance weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSpectrum {
    /// Centre of the first bin, Hz.
    pub start_hz: f64,
    pub bin_width: f64,
    pub values: Vec<f64>,
    pub inv_var: Vec<f64>,
    /// Raw spectrum bins contributing to each bin.
    pub counts: Vec<u32>,
}

impl BinnedSpectrum {
    pub fn freq(&self, i: usize) -> f64 {
        self.start_hz + i as f64 * self.bin_width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

const COMBINE_CHUNK: usize = 4096;

/// Shifts spectrum `i` by `i·shift_bins` and forms the inverse-variance
/// weighted mean in every bin of the common grid.
///
/// Each output bin is accumulated in spectrum order with compensated
/// summation, so the serial and parallel paths agree exactly.
pub fn combine(
    spectra: &[Weighted],
    shift_bins: i64,
    first_freq_hz: f64,
    bin_width: f64,
    exec: Execution,
) -> Result<BinnedSpectrum> {
    let first = spectra
        .first()
        .ok_or_else(|| Error::InsufficientData("no spectra to combine".into()))?;
    let n = first.values.len();
    if spectra.iter().any(|s| s.values.len() != n || s.inv_var.len() != n) {
        return Err(Error::InvalidSignal("spectra have different lengths".into()));
    }
    let offsets: Vec<i64> = (0..spectra.len() as i64).map(|i| i * shift_bins).collect();
    let min_off = *offsets.iter().min().unwrap();
    let max_off = *offsets.iter().max().unwrap();
    let len = n + (max_off - min_off) as usize;
    let n_chunks = len.div_ceil(COMBINE_CHUNK);
    let chunks = exec.map_indexed(n_chunks, |ci| {
        let c0 = ci * COMBINE_CHUNK;
        let c1 = (c0 + COMBINE_CHUNK).min(len);
        let mut num = vec![NeumaierSum::default(); c1 - c0];
        let mut den = vec![NeumaierSum::default(); c1 - c0];
        let mut cnt = vec![0u32; c1 - c0];
        for (s, &off) in spectra.iter().zip(&offsets) {
            let off = (off - min_off) as usize;
            // spectrum bin t lands on combined bin t + off
            let lo = c0.max(off);
            let hi = c1.min(off + n);
            for c in lo..hi {
                let t = c - off;
                let w = s.inv_var[t];
                if w > 0.0 {
                    num[c - c0].add(w * s.values[t]);
                    den[c - c0].add(w);
                    cnt[c - c0] += 1;
                }
            }
        }
        (num, den, cnt)
    });
    let mut values = Vec::with_capacity(len);
    let mut inv_var = Vec::with_capacity(len);
    let mut counts = Vec::with_capacity(len);
    for (num, den, cnt) in chunks {
        for ((a, b), c) in num.iter().zip(&den).zip(cnt) {
            let w = b.sum();
            values.push(if w > 0.0 { a.sum() / w } else { f64::NAN });
            inv_var.push(w);
            counts.push(c);
        }
    }
    Ok(BinnedSpectrum {
        start_hz: first_freq_hz + min_off as f64 * bin_width,
        bin_width,
        values,
        inv_var,
        counts,
    })
}

/// Non-overlapping inverse-variance weighted averages of `k` bins; a
/// trailing partial block is dropped.
pub fn rebin(s: &BinnedSpectrum, k: usize) -> Result<BinnedSpectrum> {
    if k == 0 {
        return Err(Error::param("K_r", "must be >= 1"));
    }
    let blocks = s.len() / k;
    let mut values = Vec::with_capacity(blocks);
    let mut inv_var = Vec::with_capacity(blocks);
    let mut counts = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let (mut num, mut den) = (NeumaierSum::default(), NeumaierSum::default());
        let mut cnt = 0;
        for i in b * k..(b + 1) * k {
            if s.inv_var[i] > 0.0 {
                num.add(s.inv_var[i] * s.values[i]);
                den.add(s.inv_var[i]);
                cnt += s.counts[i];
            }
        }
        let w = den.sum();
        values.push(if w > 0.0 { num.sum() / w } else { f64::NAN });
        inv_var.push(w);
        counts.push(cnt);
    }
    Ok(BinnedSpectrum {
        start_hz: s.start_hz + (k as f64 - 1.0) / 2.0 * s.bin_width,
        bin_width: k as f64 * s.bin_width,
        values,
        inv_var,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, std_dev};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn symmetrize_examples() {
        let mut x = vec![0.0; 5];
        x[2] = 4.0;
        let s = symmetrize(&x);
        assert_eq!(s[5 + 2], 2.0);
        assert_eq!(s[5 - 1 - 2], 2.0);
        assert_eq!(s.iter().sum::<f64>(), 4.0);
        assert!(symmetrize(&[3.0; 4]).iter().all(|&v| v == 1.5));
        let f = two_sided_freqs(5, 100.0);
        assert_eq!(f[5 + 2], 250.0);
        assert_eq!(f[5 - 1 - 2], -250.0);
    }

    proptest! {
        #[test]
        fn fold_inverts_symmetrize(x in proptest::collection::vec(0.0f64..10.0, 1..200)) {
            let y = fold(&symmetrize(&x)).unwrap();
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).abs() <= 1e-15 * a.abs());
            }
        }

        #[test]
        fn rebin_by_one_is_identity(x in proptest::collection::vec(-5.0f64..5.0, 1..100)) {
            let s = BinnedSpectrum {
                start_hz: 50.0,
                bin_width: 100.0,
                values: x.clone(),
                inv_var: vec![2.0; x.len()],
                counts: vec![1; x.len()],
            };
            prop_assert_eq!(rebin(&s, 1).unwrap(), s);
        }
    }

    #[test]
    fn false_reject_rate_matches_gaussian_tail() {
        let n = 1_000_000;
        let sigma = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mean: Vec<f64> = (0..n)
            .map(|_| 1.0 + sigma * { let z: f64 = StandardNormal.sample(&mut rng); z })
            .collect();
        let base = vec![1.0; n];
        let m = reject_bins(&mean, &base, sigma, 4.0, 5, 0.2).unwrap();
        let expect = n as f64 * 3.167_124_183_311_992e-5;
        let got = m.offenders.len() as f64;
        assert!((got - expect).abs() < 4.0 * expect.sqrt(), "{got} vs {expect}");
        assert!(m.retained_fraction() > 0.99);
    }

    #[test]
    fn spike_and_neighbours_are_masked() {
        let mut mean = vec![1.0; 100];
        mean[40] = 3.0;
        let m = reject_bins(&mean, &[1.0; 100], 0.01, 4.0, 5, 0.2).unwrap();
        assert_eq!(m.offenders, vec![40]);
        assert!((35..=45).all(|i| !m.keep[i]));
        assert!(m.keep[34] && m.keep[46]);
    }

    #[test]
    fn contamination_alarm() {
        let mut mean = vec![1.0; 100];
        for i in (0..100).step_by(7) {
            mean[i] = 2.0;
        }
        assert!(matches!(
            reject_bins(&mean, &[1.0; 100], 0.01, 4.0, 5, 0.2),
            Err(Error::Contamination { .. })
        ));
    }

    #[test]
    fn noiseless_processing_gives_zero() {
        let n = 4000;
        let s: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64 / 900.0).sin()).collect();
        let k1 = SgKernel::new(n, super::super::SgParams::new(10, 500)).unwrap();
        let k2 = SgKernel::new(n, super::super::SgParams::new(4, 500)).unwrap();
        let base = k1.apply(&s).unwrap();
        let out = process_spectrum(&s, &base, &vec![true; n], &k2).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-6), "{:e}", out.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }

    #[test]
    fn flat_profile_rescale_is_identity_up_to_constant() {
        let p = VisibilityProfile {
            freqs_hz: vec![0.0; 3],
            values: vec![0.5; 3],
        };
        let r = rescale(&[1.0, -2.0, f64::NAN], &p, 0.25, 1e-6).unwrap();
        assert_eq!(r.values[..2], [2.0, -4.0]);
        assert_eq!(r.inv_var, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn rescale_excludes_below_floor() {
        let p = VisibilityProfile {
            freqs_hz: vec![0.0; 2],
            values: vec![1.0, 1e-9],
        };
        let r = rescale(&[1.0, 1.0], &p, 1.0, 1e-6).unwrap();
        assert_eq!(r.inv_var[1], 0.0);
    }

    #[test]
    fn combine_weighted_mean_examples() {
        let a = Weighted {
            values: vec![0.0, 3.0],
            inv_var: vec![1.0, 1.0],
        };
        let b = Weighted {
            values: vec![5.0, 1.0],
            inv_var: vec![0.25, 1.0],
        };
        let c = combine(&[a, b], 0, 0.0, 1.0, Execution::Serial).unwrap();
        assert!((c.values[0] - 1.0).abs() < 1e-15);
        assert!((c.values[1] - 2.0).abs() < 1e-15);
        assert_eq!(c.counts, vec![2, 2]);
    }

    #[test]
    fn combine_shifts_and_marks_gaps() {
        let s = |v: f64| Weighted {
            values: vec![v; 3],
            inv_var: vec![1.0; 3],
        };
        let c = combine(&[s(1.0), s(2.0), s(3.0)], 2, 50.0, 100.0, Execution::Serial).unwrap();
        assert_eq!(c.len(), 7);
        assert_eq!(c.counts, vec![1, 1, 2, 1, 2, 1, 1]);
        assert_eq!(c.values[2], 1.5);
        assert_eq!(c.freq(0), 50.0);
        let neg = combine(&[s(1.0), s(2.0)], -1, 50.0, 100.0, Execution::Serial).unwrap();
        assert_eq!(neg.start_hz, -50.0);
        assert_eq!(neg.values[0], 2.0);
    }

    #[test]
    fn combined_noise_shrinks_with_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n_spec = 16;
        let n = 20_000;
        let spectra: Vec<Weighted> = (0..n_spec)
            .map(|i| {
                let sd = 1.0 + i as f64 / 4.0;
                Weighted {
                    values: (0..n).map(|_| sd * { let z: f64 = StandardNormal.sample(&mut rng); z }).collect(),
                    inv_var: vec![1.0 / (sd * sd); n],
                }
            })
            .collect();
        let c = combine(&spectra, 0, 0.0, 1.0, Execution::Parallel).unwrap();
        let expect = 1.0 / c.inv_var[0].sqrt();
        let got = std_dev(&c.values);
        assert!((got / expect - 1.0).abs() < 0.03, "{got} vs {expect}");
        let serial = combine(&spectra, 0, 0.0, 1.0, Execution::Serial).unwrap();
        assert_eq!(c, serial);
    }

    #[test]
    fn rebin_reduces_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000;
        let s = BinnedSpectrum {
            start_hz: 50.0,
            bin_width: 100.0,
            values: (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
            inv_var: vec![1.0; n],
            counts: vec![1; n],
        };
        let r = rebin(&s, 10).unwrap();
        assert_eq!(r.len(), 10_000);
        assert_eq!(r.bin_width, 1000.0);
        assert_eq!(r.start_hz, 500.0);
        assert!((std_dev(&r.values) * 10f64.sqrt() - 1.0).abs() < 0.03);
        let flat = BinnedSpectrum {
            values: vec![2.5; 95],
            inv_var: vec![1.0; 95],
            counts: vec![1; 95],
            ..s
        };
        let r = rebin(&flat, 10).unwrap();
        assert_eq!(r.len(), 9);
        assert!(r.values.iter().all(|&v| (v - 2.5).abs() < 1e-15));
        assert!(mean(&r.inv_var) == 10.0);
    }
}
