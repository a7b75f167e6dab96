//! Raw spectra to grand spectrum: baseline removal, bin rejection,
//! visibility rescaling, shifted combination, rebinning and matched
//! filtering.

pub mod grand;
pub mod sg;
pub mod stages;

use serde::{Deserialize, Serialize};

use crate::constants::angular;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::network::{output_density_mm_exact, NetworkParams};
use crate::stats::{mean, std_dev, NeumaierSum};
use crate::synth::{faxion_excess, noise_profile, RawSpectrumSet, SynthConfig, Truth};

pub use grand::{grand, lorentzian_weights, matched_filter, measure_at, GrandSpectrum};
pub use sg::{sg_filter, SgKernel, SgParams};
pub use stages::{
    combine, fold, process_spectrum, real_frequency_mean, rebin, reject_bins, rescale, symmetrize,
    two_sided_freqs, BinMask, BinnedSpectrum, VisibilityProfile, Weighted,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Shared baseline filter.
    pub sg1: SgParams,
    /// Per-spectrum flattening filter.
    pub sg2: SgParams,
    pub reject_sigma: f64,
    /// Bins masked on each side of a rejected bin.
    pub reject_neighbors: usize,
    /// Rejected fraction above which the data are called contaminated.
    pub max_reject_fraction: f64,
    /// Refill passes of the masked baseline fit.
    pub mask_iterations: usize,
    #[serde(rename = "K_r")]
    pub k_r: usize,
    #[serde(rename = "K_g")]
    pub k_g: usize,
    /// Shift applied to spectrum i is `i·tuning_shift`, Hz.
    pub tuning_shift: f64,
    /// FWHM of the Lorentzian template, Hz.
    pub linewidth: f64,
    /// Explicit template; overrides the Lorentzian when set.
    pub lineshape_weights: Option<Vec<f64>>,
    /// Bins whose visibility falls below this fraction of the maximum are
    /// excluded.
    pub visibility_floor: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sg1: SgParams::new(10, 500),
            sg2: SgParams::new(4, 500),
            reject_sigma: 4.0,
            reject_neighbors: 5,
            max_reject_fraction: 0.2,
            mask_iterations: 5,
            k_r: 10,
            k_g: 41,
            tuning_shift: 10e3,
            linewidth: 9e3,
            lineshape_weights: None,
            visibility_floor: 1e-6,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sg1.validate()?;
        self.sg2.validate()?;
        if !(self.reject_sigma > 0.0) {
            return Err(Error::param("reject_sigma", "must be positive"));
        }
        if !(self.max_reject_fraction > 0.0 && self.max_reject_fraction <= 1.0) {
            return Err(Error::param("max_reject_fraction", "must be in (0, 1]"));
        }
        if self.k_r == 0 {
            return Err(Error::param("K_r", "must be >= 1"));
        }
        if self.k_g % 2 == 0 {
            return Err(Error::param("K_g", "must be odd"));
        }
        if !self.tuning_shift.is_finite() {
            return Err(Error::param("tuning_shift", "must be finite"));
        }
        if !(self.visibility_floor >= 0.0 && self.visibility_floor < 1.0) {
            return Err(Error::param("visibility_floor", "must be in [0, 1)"));
        }
        if let Some(w) = &self.lineshape_weights {
            if w.len() != self.k_g {
                return Err(Error::param("lineshape_weights", "length must equal K_g"));
            }
            if w.iter().any(|x| !x.is_finite()) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::param("lineshape_weights", "must be finite with unit sum"));
            }
        } else if !(self.linewidth > 0.0) {
            return Err(Error::param("linewidth", "must be positive"));
        }
        Ok(())
    }

    /// Matched-filter template at the rebinned resolution.
    pub fn template(&self, bin_width: f64) -> Result<Vec<f64>> {
        match &self.lineshape_weights {
            Some(w) => Ok(w.clone()),
            None => lorentzian_weights(self.k_g, self.k_r as f64 * bin_width, self.linewidth),
        }
    }

    /// Shift per spectrum in whole bins.
    pub fn shift_bins(&self, bin_width: f64) -> Result<i64> {
        let s = self.tuning_shift / bin_width;
        if (s - s.round()).abs() > 1e-9 * s.abs().max(1.0) {
            return Err(Error::param("tuning_shift", "must be a multiple of bin_width"));
        }
        Ok(s.round() as i64)
    }
}

/// Summary numbers for each run of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub retention: f64,
    pub rejected_bins: usize,
    /// Empirical standard deviation of the processed spectra.
    pub sigma_p: f64,
    /// 1/√M for M-averaged spectra.
    pub sigma_p_expected: f64,
    /// Robust spread of the unnormalized grand statistic (one when the
    /// propagated variances are right).
    pub sigma_g: f64,
    pub grand_bins: usize,
    pub grand_mean: f64,
    pub grand_std: f64,
}

/// Intermediate products kept when stage dumping is requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDump {
    pub freqs_hz: Vec<f64>,
    pub mean: Vec<f64>,
    pub baseline: Vec<f64>,
    pub mask: BinMask,
    pub processed: Vec<Vec<f64>>,
    pub visibility: Vec<f64>,
    pub combined: BinnedSpectrum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub rebinned: BinnedSpectrum,
    pub grand: GrandSpectrum,
    pub stats: StageStats,
    pub stages: Option<StageDump>,
}

/// Pipeline with filters prepared for one spectrum length.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    exec: Execution,
    n_two_sided: usize,
    first: SgKernel,
    second: SgKernel,
}

impl Pipeline {
    /// `n_folded` is the number of folded IF bins per raw spectrum.
    pub fn new(cfg: PipelineConfig, n_folded: usize, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let n = 2 * n_folded;
        Ok(Pipeline {
            first: SgKernel::new(n, cfg.sg1)?,
            second: SgKernel::new(n, cfg.sg2)?,
            cfg,
            exec,
            n_two_sided: n,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Runs every stage. `exclude_hz` keeps a known signal out of the
    /// grand-spectrum normalization.
    pub fn run(
        &self,
        raw: &RawSpectrumSet,
        profile: &VisibilityProfile,
        exclude_hz: Option<f64>,
        keep_stages: bool,
    ) -> Result<PipelineOutput> {
        let bin_width = raw.config.bin_width;
        let m = raw.config.subspectra as f64;
        self.run_spectra(&raw.spectra, bin_width, m, profile, exclude_hz, keep_stages)
    }

    /// As [`Pipeline::run`] on bare folded spectra averaged over `m`
    /// periodograms each.
    pub fn run_spectra(
        &self,
        folded: &[Vec<f64>],
        bin_width: f64,
        m: f64,
        profile: &VisibilityProfile,
        exclude_hz: Option<f64>,
        keep_stages: bool,
    ) -> Result<PipelineOutput> {
        if folded.is_empty() {
            return Err(Error::InsufficientData("no spectra".into()));
        }
        if folded.iter().any(|s| 2 * s.len() != self.n_two_sided) {
            return Err(Error::InvalidSignal(format!(
                "pipeline prepared for {} folded bins",
                self.n_two_sided / 2
            )));
        }
        if profile.len() != self.n_two_sided {
            return Err(Error::InvalidSignal("visibility profile has the wrong length".into()));
        }
        let cfg = &self.cfg;
        let two_sided: Vec<Vec<f64>> = self.exec.map_indexed(folded.len(), |i| symmetrize(&folded[i]));
        let avg = real_frequency_mean(&two_sided)?;
        let first_pass = self.first.apply(&avg)?;
        let sigma_mean = 1.0 / (m * folded.len() as f64).sqrt();
        let mask = reject_bins(
            &avg,
            &first_pass,
            sigma_mean,
            cfg.reject_sigma,
            cfg.reject_neighbors,
            cfg.max_reject_fraction,
        )?;
        let baseline = self.first.apply_masked(&avg, &mask.keep, cfg.mask_iterations)?;
        let base_var = 1.0 / m;

        // processing and rescaling fused per spectrum so the processed
        // spectra are only held when dumping
        let per_spectrum = self.exec.try_map_indexed(two_sided.len(), |i| {
            let x = process_spectrum(&two_sided[i], &baseline, &mask.keep, &self.second)?;
            let w = rescale(&x, profile, base_var, cfg.visibility_floor)?;
            let moments = positive_half_moments(&x);
            Ok::<_, Error>((keep_stages.then_some(x), w, moments))
        })?;
        drop(two_sided);
        let (mut n, mut s1, mut s2) = (0.0, NeumaierSum::default(), NeumaierSum::default());
        let mut processed = Vec::new();
        let mut rescaled = Vec::with_capacity(per_spectrum.len());
        for (x, w, (c, a, b)) in per_spectrum {
            n += c;
            s1.add(a);
            s2.add(b);
            processed.extend(x);
            rescaled.push(w);
        }
        let sigma_p = if n > 1.0 {
            let mu = s1.sum() / n;
            ((s2.sum() - n * mu * mu) / (n - 1.0)).max(0.0).sqrt()
        } else {
            f64::NAN
        };
        let freqs = two_sided_freqs(self.n_two_sided / 2, bin_width);
        let shift = cfg.shift_bins(bin_width)?;
        let combined = combine(&rescaled, shift, freqs[0], bin_width, self.exec)?;
        drop(rescaled);
        let rebinned = rebin(&combined, cfg.k_r)?;
        let template = cfg.template(bin_width)?;
        let g = grand(&rebinned, &template, exclude_hz)?;

        let reach = template.len() as f64 * g.bin_width;
        let clean: Vec<f64> = g
            .freqs_hz
            .iter()
            .zip(&g.values)
            .filter(|(f, _)| exclude_hz.is_none_or(|x| (**f - x).abs() > reach))
            .map(|(_, v)| *v)
            .collect();
        let stats = StageStats {
            retention: mask.retained_fraction(),
            rejected_bins: mask.keep.iter().filter(|k| !**k).count(),
            sigma_p,
            sigma_p_expected: base_var.sqrt(),
            sigma_g: g.raw_sigma,
            grand_bins: g.len(),
            grand_mean: mean(&clean),
            grand_std: std_dev(&clean),
        };
        let stages = keep_stages.then(|| StageDump {
            freqs_hz: freqs,
            mean: avg,
            baseline,
            mask,
            processed,
            visibility: profile.values.clone(),
            combined,
        });
        Ok(PipelineOutput {
            rebinned,
            grand: g,
            stats,
            stages,
        })
    }
}

// ±f entries of one spectrum are copies, so only the positive half counts
fn positive_half_moments(x: &[f64]) -> (f64, f64, f64) {
    let (mut a, mut b) = (NeumaierSum::default(), NeumaierSum::default());
    let mut n = 0.0;
    for &v in x[x.len() / 2..].iter().filter(|v| v.is_finite()) {
        n += 1.0;
        a.add(v);
        b.add(v * v);
    }
    (n, a.sum(), b.sum())
}

/// Grand-spectrum excess at the faxion's stacked frequency.
pub fn measure_faxion(g: &GrandSpectrum, truth: &Truth, synth: &SynthConfig) -> Result<f64> {
    measure_at(g, truth.fictitious_hz(synth))
}

/// Ideal significance of the stepped faxion for a likelihood analysis of
/// the folded spectra with known noise: `z² = Σ_i Σ_k M (e_ik / n_k)²`.
pub fn predicted_significance(p: &NetworkParams, synth: &SynthConfig, truth: &Truth) -> Result<f64> {
    let noise = noise_profile(p, synth)?;
    let m = synth.subspectra as f64;
    let mut z2 = 0.0;
    for &f in &truth.freqs_hz {
        let e = faxion_excess(p, synth, f)?;
        z2 += e.iter().zip(&noise).map(|(e, n)| m * (e / n).powi(2)).sum::<f64>();
    }
    Ok(z2.sqrt())
}

/// Expected folded noise power of one spectrum at IF offset `if_hz`.
pub fn folded_noise_at(p: &NetworkParams, synth: &SynthConfig, if_hz: f64) -> f64 {
    let quiet = NetworkParams { n_a: 0.0, ..*p };
    output_density_mm_exact(&quiet, angular(synth.lo_offset + if_hz))
        + output_density_mm_exact(&quiet, angular(synth.lo_offset - if_hz))
        + 2.0 * synth.hemt_noise * p.g_a * (p.n_t + 0.5)
}

#[cfg(test)]
mod tests;
