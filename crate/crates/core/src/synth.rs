//! Synthetic single-quadrature power spectra.
//!
//! Each IF bin holds the average of `subspectra` unit-mean exponential
//! periodogram bins scaled by the expected folded power, i.e. a
//! Gamma(M, 1/M) variate times the mean. The faxion is a Lorentzian tone
//! stepped through the cavity response one spectrum at a time.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::constants::angular;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::network::{output_density_mm_exact, NetworkParams};
use crate::rng::{substream, RUN_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lineshape {
    #[default]
    Lorentzian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaxionConfig {
    /// On-resonance excess density relative to unsqueezed vacuum for a
    /// critically coupled, lossless cavity. Zero disables the tone.
    pub power_fraction: f64,
    /// Full width at half maximum, Hz.
    pub linewidth: f64,
    /// Width of the window around resonance holding the sweep midpoint, Hz.
    pub start_window: f64,
    /// Frequency step between consecutive spectra, Hz.
    pub step: f64,
    pub lineshape: Lineshape,
}

impl Default for FaxionConfig {
    fn default() -> Self {
        FaxionConfig {
            power_fraction: 0.01,
            linewidth: 9e3,
            start_window: 2e6,
            step: -10e3,
            lineshape: Lineshape::Lorentzian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Δ_b, Hz.
    pub bin_width: f64,
    /// Upper edge of the analysis band, Hz.
    pub if_band: f64,
    /// Number M of periodograms averaged into each raw spectrum.
    pub subspectra: u32,
    pub n_spectra: usize,
    pub faxion: FaxionConfig,
    /// Receiver added noise relative to amplified quadrature vacuum.
    pub hemt_noise: f64,
    pub seed: u64,
    /// Local-oscillator detuning from cavity resonance, Hz.
    pub lo_offset: f64,
    /// Half width of the simulated rf band around resonance, Hz.
    pub rf_band: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            bin_width: 100.0,
            if_band: 1.9e6,
            subspectra: 32,
            n_spectra: 401,
            faxion: FaxionConfig::default(),
            hemt_noise: 0.01,
            seed: 0,
            lo_offset: 0.0,
            rf_band: 5e6,
        }
    }
}

impl SynthConfig {
    pub fn n_bins(&self) -> usize {
        (self.if_band / self.bin_width).round() as usize
    }

    /// Centre of folded IF bin `k`, Hz.
    pub fn bin_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.bin_width
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::param("bin_width", "must be positive"));
        }
        if !(self.if_band > 0.0 && self.if_band.is_finite()) {
            return Err(Error::param("if_band", "must be positive"));
        }
        let ratio = self.if_band / self.bin_width;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::param("if_band", "must be a multiple of bin_width"));
        }
        if self.subspectra < 1 {
            return Err(Error::param("subspectra", "must be >= 1"));
        }
        if self.n_spectra < 1 {
            return Err(Error::param("n_spectra", "must be >= 1"));
        }
        if !(self.hemt_noise >= 0.0 && self.hemt_noise.is_finite()) {
            return Err(Error::param("hemt_noise", "must be >= 0"));
        }
        if !self.lo_offset.is_finite() {
            return Err(Error::param("lo_offset", "must be finite"));
        }
        if !(self.rf_band > 0.0 && self.rf_band.is_finite()) {
            return Err(Error::param("rf_band", "must be positive"));
        }
        let f = &self.faxion;
        if !(f.power_fraction >= 0.0 && f.power_fraction.is_finite()) {
            return Err(Error::param("faxion.power_fraction", "must be >= 0"));
        }
        if !(f.linewidth > 0.0 && f.linewidth.is_finite()) {
            return Err(Error::param("faxion.linewidth", "must be positive"));
        }
        if f.linewidth < 5.0 * self.bin_width {
            return Err(Error::param(
                "faxion.linewidth",
                "must be much wider than bin_width (at least 5 bins)",
            ));
        }
        if !(f.start_window >= 0.0 && f.start_window.is_finite()) {
            return Err(Error::param("faxion.start_window", "must be >= 0"));
        }
        if !f.step.is_finite() {
            return Err(Error::param("faxion.step", "must be finite"));
        }
        let reach = f.start_window / 2.0 + f.step.abs() * (self.n_spectra - 1) as f64 / 2.0;
        if reach > self.rf_band {
            return Err(Error::Config(format!(
                "faxion sweep reaches {reach} Hz from resonance, beyond rf_band {} Hz",
                self.rf_band
            )));
        }
        Ok(())
    }
}

/// Probability mass of a unit-area Lorentzian (centre `c`, FWHM `g`) in `[lo, hi]`.
pub fn lorentzian_mass(lo: f64, hi: f64, c: f64, g: f64) -> f64 {
    (((hi - c) * 2.0 / g).atan() - ((lo - c) * 2.0 / g).atan()) / PI
}

/// Folded noise power per IF bin without the faxion.
pub fn noise_profile(p: &NetworkParams, cfg: &SynthConfig) -> Result<Vec<f64>> {
    p.validate()?;
    cfg.validate()?;
    let quiet = NetworkParams { n_a: 0.0, ..*p };
    let receiver = 2.0 * cfg.hemt_noise * p.g_a * (p.n_t + 0.5);
    Ok((0..cfg.n_bins())
        .map(|k| {
            let f = cfg.bin_center(k);
            output_density_mm_exact(&quiet, angular(cfg.lo_offset + f))
                + output_density_mm_exact(&quiet, angular(cfg.lo_offset - f))
                + receiver
        })
        .collect())
}

/// Excess density at the cavity output per unit of lineshape, for a tone at
/// rf detuning `omega` (rad/s).
fn faxion_transfer(p: &NetworkParams, power_fraction: f64, omega: f64) -> f64 {
    let kt = p.kappa_t();
    let b = kt * kt / 4.0 + omega * omega;
    p.g_a * p.lambda_t * power_fraction * (p.n_t + 0.5) * p.kappa_l * p.kappa_m / b
}

fn check_faxion(cfg: &SynthConfig, rf_hz: f64) -> Result<()> {
    if !rf_hz.is_finite() || rf_hz.abs() > cfg.rf_band {
        return Err(Error::Config(format!(
            "faxion at {rf_hz} Hz lies outside the simulated rf band ±{} Hz",
            cfg.rf_band
        )));
    }
    Ok(())
}

/// Faxion excess per folded IF bin for a tone at rf detuning `rf_hz` from
/// resonance. Both rf images of each IF bin are integrated, so a tone near
/// the LO folds correctly.
pub fn faxion_excess(p: &NetworkParams, cfg: &SynthConfig, rf_hz: f64) -> Result<Vec<f64>> {
    check_faxion(cfg, rf_hz)?;
    let fx = &cfg.faxion;
    let amp = faxion_transfer(p, fx.power_fraction, angular(rf_hz)) * fx.linewidth / cfg.bin_width;
    let c = rf_hz - cfg.lo_offset;
    let h = cfg.bin_width / 2.0;
    Ok((0..cfg.n_bins())
        .map(|k| {
            let f = cfg.bin_center(k);
            let upper = lorentzian_mass(f - h, f + h, c, fx.linewidth);
            let lower = lorentzian_mass(-f - h, -f + h, c, fx.linewidth);
            amp * (upper + lower)
        })
        .collect())
}

/// Expected folded power per IF bin, optionally with the faxion at rf
/// detuning `faxion_hz`.
pub fn mean_power_profile(
    p: &NetworkParams,
    cfg: &SynthConfig,
    faxion_hz: Option<f64>,
) -> Result<Vec<f64>> {
    let mut m = noise_profile(p, cfg)?;
    if let Some(f) = faxion_hz {
        for (x, e) in m.iter_mut().zip(faxion_excess(p, cfg, f)?) {
            *x += e;
        }
    }
    Ok(m)
}

/// One averaged raw spectrum: `mean·Gamma(M, 1/M)` per bin.
pub fn synthesize_raw<R: Rng + ?Sized>(means: &[f64], subspectra: u32, rng: &mut R) -> Result<Vec<f64>> {
    if subspectra < 1 {
        return Err(Error::param("subspectra", "must be >= 1"));
    }
    if let Some(bad) = means.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::InvalidSignal(format!("mean power {bad} is not positive")));
    }
    let m = subspectra as f64;
    let gamma = Gamma::new(m, 1.0 / m).expect("shape and scale are positive");
    Ok(means.iter().map(|&mu| mu * gamma.sample(rng)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    /// Faxion rf detuning from resonance in the first spectrum, Hz.
    pub start_hz: f64,
    /// Sweep midpoint, Hz.
    pub mid_hz: f64,
    /// Per-spectrum rf detuning, Hz.
    pub freqs_hz: Vec<f64>,
    pub power_fraction: f64,
    pub run_index: u32,
    pub seed: u64,
}

impl Truth {
    /// Frequency at which the stepped tone stacks in the combined
    /// (shifted) spectrum: the first-spectrum IF offset from the LO.
    pub fn fictitious_hz(&self, cfg: &SynthConfig) -> f64 {
        self.start_hz - cfg.lo_offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSpectrumSet {
    /// `spectra[i][k]`: spectrum i, folded IF bin k.
    pub spectra: Vec<Vec<f64>>,
    pub truth: Truth,
    pub config: SynthConfig,
    pub network: NetworkParams,
    /// Expected per-bin power without the faxion.
    pub noise_mean: Vec<f64>,
}

impl RawSpectrumSet {
    pub fn n_bins(&self) -> usize {
        self.noise_mean.len()
    }
}

/// Draws the sweep midpoint for run `run_index` and returns the truth record.
pub fn draw_truth(cfg: &SynthConfig, run_index: u32) -> Truth {
    let mut rng = substream(cfg.seed, run_index, RUN_STREAM as u32);
    let half = cfg.faxion.start_window / 2.0;
    let mid = if half > 0.0 {
        rng.random_range(-half..half)
    } else {
        0.0
    };
    let step = cfg.faxion.step;
    let start = mid - step * (cfg.n_spectra - 1) as f64 / 2.0;
    Truth {
        start_hz: start,
        mid_hz: mid,
        freqs_hz: (0..cfg.n_spectra).map(|i| start + i as f64 * step).collect(),
        power_fraction: cfg.faxion.power_fraction,
        run_index,
        seed: cfg.seed,
    }
}

/// A full acquisition: `n_spectra` raw spectra with the faxion stepped
/// through the cavity response.
pub fn synthesize_run(
    p: &NetworkParams,
    cfg: &SynthConfig,
    run_index: u32,
    exec: Execution,
) -> Result<RawSpectrumSet> {
    p.check()?;
    cfg.validate()?;
    let truth = draw_truth(cfg, run_index);
    for &f in [truth.freqs_hz[0], *truth.freqs_hz.last().unwrap()].iter() {
        check_faxion(cfg, f)?;
    }
    let noise = noise_profile(p, cfg)?;
    let with_tone = cfg.faxion.power_fraction > 0.0;
    let spectra = exec.try_map_indexed(cfg.n_spectra, |i| {
        let mut means = noise.clone();
        if with_tone {
            for (x, e) in means.iter_mut().zip(faxion_excess(p, cfg, truth.freqs_hz[i])?) {
                *x += e;
            }
        }
        let mut rng = substream(cfg.seed, run_index, i as u32);
        synthesize_raw(&means, cfg.subspectra, &mut rng)
    })?;
    Ok(RawSpectrumSet {
        spectra,
        truth,
        config: *cfg,
        network: *p,
        noise_mean: noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{from_db, to_db};
    use crate::network::expected_squeezing;
    use crate::stats::{ks_two_sample, mean, variance};

    fn small() -> SynthConfig {
        SynthConfig {
            if_band: 200e3,
            n_spectra: 21,
            faxion: FaxionConfig {
                step: -20e3,
                start_window: 100e3,
                ..FaxionConfig::default()
            },
            ..SynthConfig::default()
        }
    }

    #[test]
    fn flat_vacuum_limit() {
        let p = NetworkParams {
            kappa_a: 0.0,
            g_s: 1.0,
            lambda_t: 1.0,
            ..NetworkParams::default()
        };
        let cfg = SynthConfig {
            hemt_noise: 0.0,
            ..small()
        };
        let m = mean_power_profile(&p, &cfg, None).unwrap();
        let expect = 2.0 * p.g_a * 0.5;
        assert!(m.iter().all(|x| (x / expect - 1.0).abs() < 1e-12));
    }

    #[test]
    fn far_detuned_bins_show_squeezing() {
        let sq = NetworkParams::squeezed_preset();
        let off = NetworkParams { g_s: 1.0, ..sq };
        let cfg = SynthConfig {
            hemt_noise: 0.0,
            lo_offset: 200e6,
            rf_band: 300e6,
            ..small()
        };
        let a = mean_power_profile(&sq, &cfg, None).unwrap();
        let b = mean_power_profile(&off, &cfg, None).unwrap();
        let ratio = to_db(a[cfg.n_bins() - 1] / b[cfg.n_bins() - 1]);
        let expect = expected_squeezing(0.69, from_db(13.0)).unwrap();
        assert!((ratio - expect).abs() < 1e-3, "{ratio} vs {expect}");
    }

    #[test]
    fn faxion_on_resonance_excess() {
        let p = NetworkParams {
            lambda_t: 1.0,
            kappa_a: 0.0,
            ..NetworkParams::default()
        };
        let cfg = SynthConfig {
            hemt_noise: 0.0,
            lo_offset: -50e3,
            ..small()
        };
        let e = faxion_excess(&p, &cfg, 0.0).unwrap();
        // tone sits at IF +50 kHz: bin 500 is centred at 50.05 kHz
        let k = 500;
        let fx = cfg.faxion;
        let shape = fx.linewidth / cfg.bin_width
            * (lorentzian_mass(cfg.bin_center(k) - 50.0, cfg.bin_center(k) + 50.0, 50e3, fx.linewidth)
                + lorentzian_mass(-cfg.bin_center(k) - 50.0, -cfg.bin_center(k) + 50.0, 50e3, fx.linewidth));
        let vac = p.g_a * 0.5;
        assert!((e[k] / vac / (fx.power_fraction * shape) - 1.0).abs() < 1e-12);
        assert!((shape - 2.0 / PI).abs() < 5e-3);
        // total excess equals the tone's area (nothing falls outside the band much)
        let total: f64 = e.iter().sum::<f64>() * cfg.bin_width;
        assert!((total / (vac * fx.power_fraction * fx.linewidth) - 1.0).abs() < 0.15);
    }

    #[test]
    fn faxion_outside_rf_band_is_rejected() {
        let cfg = small();
        assert!(faxion_excess(&NetworkParams::default(), &cfg, 6e6).is_err());
        let wide = SynthConfig {
            n_spectra: 2001,
            ..SynthConfig::default()
        };
        assert!(matches!(wide.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn large_m_converges_to_mean() {
        let means = vec![3.0; 2000];
        let mut rng = substream(1, 0, 0);
        let x = synthesize_raw(&means, 100_000, &mut rng).unwrap();
        assert!(x.iter().all(|v| (v / 3.0 - 1.0).abs() < 0.02));
    }

    #[test]
    fn gamma_variance_matches_m() {
        let means = vec![2.0; 50_000];
        let mut rng = substream(3, 0, 0);
        let x = synthesize_raw(&means, 32, &mut rng).unwrap();
        let v = variance(&x);
        let expect = 4.0 / 32.0;
        // standard error of a sample variance ≈ σ²·√((κ−1)/n) with excess kurtosis 6/M
        let se = expect * ((2.0 + 6.0 / 32.0) / 50_000f64).sqrt();
        assert!((v - expect).abs() < 3.0 * se, "{v} vs {expect}");
    }

    #[test]
    fn runs_are_reproducible_and_parallel_safe() {
        let p = NetworkParams::squeezed_preset();
        let cfg = SynthConfig { seed: 11, ..small() };
        let a = synthesize_run(&p, &cfg, 3, Execution::Serial).unwrap();
        let b = synthesize_run(&p, &cfg, 3, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let c = synthesize_run(&p, &cfg, 4, Execution::Serial).unwrap();
        assert_ne!(a.spectra, c.spectra);
    }

    #[test]
    fn sweep_geometry() {
        let cfg = SynthConfig::default();
        let t = draw_truth(&cfg, 0);
        let span = t.freqs_hz[0] - t.freqs_hz[400];
        assert!((span - 4e6).abs() < 1e-6);
        assert!(t.mid_hz.abs() <= 1e6);
        assert!((t.freqs_hz[200] - t.mid_hz).abs() < 1e-6);
    }

    #[test]
    fn ensemble_mean_matches_profile() {
        let p = NetworkParams::squeezed_preset();
        let cfg = SynthConfig {
            seed: 5,
            n_spectra: 1,
            ..SynthConfig::default()
        };
        let means = mean_power_profile(&p, &cfg, Some(100e3)).unwrap();
        let mut rng = substream(cfg.seed, 0, 0);
        let draws = 16;
        let mut acc = vec![0.0; means.len()];
        for _ in 0..draws {
            let x = synthesize_raw(&means, cfg.subspectra, &mut rng).unwrap();
            acc.iter_mut().zip(&x).for_each(|(a, v)| *a += v);
        }
        // pooled standardized residual over ≥10⁴ draws
        let n = (draws * means.len()) as f64;
        let z: Vec<f64> = acc
            .iter()
            .zip(&means)
            .map(|(a, m)| a / draws as f64 / m - 1.0)
            .collect();
        let pooled = mean(&z);
        let se = (1.0 / cfg.subspectra as f64 / n).sqrt();
        assert!(pooled.abs() < 5.0 * se, "{pooled} vs {se}");
    }

    #[test]
    fn no_tone_matches_faxion_free_statistics() {
        let p = NetworkParams::squeezed_preset();
        let zero = SynthConfig {
            seed: 8,
            faxion: FaxionConfig {
                power_fraction: 0.0,
                ..small().faxion
            },
            ..small()
        };
        let a = synthesize_run(&p, &zero, 0, Execution::Serial).unwrap();
        let b = synthesize_run(&p, &SynthConfig { seed: 9, ..zero }, 0, Execution::Serial).unwrap();
        let norm = |s: &RawSpectrumSet| -> Vec<f64> {
            s.spectra
                .iter()
                .flat_map(|row| row.iter().zip(&s.noise_mean).map(|(x, m)| x / m))
                .collect()
        };
        assert!(ks_two_sample(&norm(&a), &norm(&b)).p_value > 1e-3);
    }

    #[test]
    fn different_seeds_are_uncorrelated() {
        let p = NetworkParams::unsqueezed_preset();
        let cfg = small();
        let a = synthesize_run(&p, &SynthConfig { seed: 1, ..cfg }, 0, Execution::Serial).unwrap();
        let b = synthesize_run(&p, &SynthConfig { seed: 2, ..cfg }, 0, Execution::Serial).unwrap();
        let flat = |s: &RawSpectrumSet| -> Vec<f64> {
            s.spectra
                .iter()
                .flat_map(|row| row.iter().zip(&s.noise_mean).map(|(x, m)| x / m))
                .collect()
        };
        let (x, y) = (flat(&a), flat(&b));
        let r = crate::stats::correlation(&x, &y);
        assert!(r.abs() < 5.0 / (x.len() as f64).sqrt(), "{r}");
    }
}
