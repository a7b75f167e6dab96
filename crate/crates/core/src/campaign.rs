//! Monte Carlo campaigns comparing the squeezed and unsqueezed receivers.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::axion::HaloscopePhysical;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::io;
use crate::network::NetworkParams;
use crate::pipeline::{measure_faxion, predicted_significance, Pipeline, PipelineConfig, StageStats, VisibilityProfile};
use crate::rng::derive_seed;
use crate::scan_rate::{compare_configs, ScanConfig};
use crate::stats::{mean, std_dev};
use crate::synth::{synthesize_run, FaxionConfig, SynthConfig};
use crate::theory::TheoryConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

/// Acceptance thresholds used by `--check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckThresholds {
    /// Allowed |E_m − E_t| in combined standard errors.
    pub e_t_sigmas: f64,
    /// Uncertainty assigned to E_t when combining errors.
    pub e_t_uncertainty: f64,
    /// Optional absolute window for E_m.
    pub e_m_range: Option<[f64; 2]>,
    /// Minimum mean bin retention of the pipeline.
    pub min_retention: f64,
}

impl Default for CheckThresholds {
    fn default() -> Self {
        CheckThresholds {
            e_t_sigmas: 2.0,
            e_t_uncertainty: 0.07,
            e_m_range: None,
            min_retention: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scale: Scale,
    pub squeezed: NetworkParams,
    pub unsqueezed: NetworkParams,
    pub synth: SynthConfig,
    pub pipeline: PipelineConfig,
    pub scan: ScanConfig,
    pub theory: TheoryConfig,
    pub axion: HaloscopePhysical,
    pub repetitions: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub execution: Execution,
    /// Fraction of failed repetitions above which the campaign fails.
    pub max_failure_fraction: f64,
    pub checks: CheckThresholds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::defaults(Scale::Desk)
    }
}

impl ExperimentConfig {
    pub fn defaults(scale: Scale) -> Self {
        let (repetitions, n_spectra, step, power_fraction, e_m_range) = match scale {
            Scale::Desk => (20, 101, 40e3, 0.5, None),
            Scale::Full => (200, 401, 10e3, 0.13, Some([1.9, 2.35])),
        };
        ExperimentConfig {
            scale,
            squeezed: NetworkParams::squeezed_preset(),
            unsqueezed: NetworkParams::unsqueezed_preset(),
            synth: SynthConfig {
                n_spectra,
                faxion: FaxionConfig {
                    power_fraction,
                    step: -step,
                    ..FaxionConfig::default()
                },
                ..SynthConfig::default()
            },
            pipeline: PipelineConfig {
                tuning_shift: step,
                ..PipelineConfig::default()
            },
            scan: ScanConfig::default(),
            theory: TheoryConfig::default(),
            axion: HaloscopePhysical::default(),
            repetitions,
            seed: 0,
            output_dir: None,
            execution: Execution::Parallel,
            max_failure_fraction: 0.05,
            checks: CheckThresholds {
                e_m_range,
                ..CheckThresholds::default()
            },
        }
    }

    /// Parses a JSON configuration. Fields left out take the defaults of the
    /// selected `scale` (desk when absent).
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        if !user.is_object() {
            return Err(Error::Config("configuration must be a JSON object".into()));
        }
        let scale = match user.get("scale") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => Scale::Desk,
        };
        let mut merged = serde_json::to_value(Self::defaults(scale))?;
        merge(&mut merged, user);
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.squeezed.validate()?;
        self.unsqueezed.validate()?;
        self.synth.validate()?;
        self.pipeline.validate()?;
        self.scan.validate()?;
        self.axion.validate()?;
        self.pipeline.shift_bins(self.synth.bin_width)?;
        if self.repetitions < 2 {
            return Err(Error::param("repetitions", "must be >= 2"));
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(Error::param("max_failure_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Non-fatal inconsistencies worth reporting.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let (s, u) = (&self.squeezed, &self.unsqueezed);
        let same = NetworkParams {
            g_s: s.g_s,
            kappa_m: s.kappa_m,
            ..*u
        };
        if same != *s {
            w.push("squeezed and unsqueezed configurations differ in more than G_s and kappa_m".into());
        }
        if (self.pipeline.tuning_shift + self.synth.faxion.step).abs() > 1e-9 * self.synth.faxion.step.abs() {
            w.push(format!(
                "tuning_shift {} Hz does not undo the faxion step {} Hz; the tone will not stack",
                self.pipeline.tuning_shift, self.synth.faxion.step
            ));
        }
        w.extend(s.warnings());
        w.extend(u.warnings());
        w
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Faxion power measured in one repetition for one receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub power: f64,
    pub predicted: f64,
    pub start_hz: f64,
    pub stats: StageStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub index: usize,
    pub sub_seed: u64,
    pub squeezed: Option<Measurement>,
    pub unsqueezed: Option<Measurement>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub sub_seeds: Vec<u64>,
    pub version: String,
    pub scale: Scale,
    pub repetitions: usize,
}

/// Per-receiver visibility profiles as used for rescaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    pub freqs_hz: Vec<f64>,
    pub squeezed: Vec<f64>,
    pub unsqueezed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub powers_squeezed: Vec<f64>,
    pub powers_unsqueezed: Vec<f64>,
    pub mu_s: f64,
    pub mu_s_se: f64,
    pub mu_u: f64,
    pub mu_u_se: f64,
    /// Pooled spread of faxion-free grand-spectrum bins.
    pub sigma_g: f64,
    pub noise_mean: f64,
    pub e_m: f64,
    pub e_m_se: f64,
    /// Scan-rate ratio of the two receivers.
    pub e_t: f64,
    /// Squared ratio of the ideal significances for the simulated protocol.
    pub e_t_protocol: f64,
    pub predicted_mu_s: f64,
    pub predicted_mu_u: f64,
    pub mean_retention: f64,
    pub failures: Vec<(usize, String)>,
    pub repetitions: Vec<Repetition>,
    pub profiles: Profiles,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub seconds_per_repetition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub limit: String,
    pub pass: bool,
}

/// Sample mean with its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let se = if xs.len() > 1 {
        std_dev(xs) / (xs.len() as f64).sqrt()
    } else {
        f64::NAN
    };
    (m, se)
}

/// `(µ_s/µ_u)²` with first-order error propagation from independent means.
pub fn enhancement_ratio(mu_s: f64, se_s: f64, mu_u: f64, se_u: f64) -> (f64, f64) {
    let e = (mu_s / mu_u).powi(2);
    let rel = ((se_s / mu_s).powi(2) + (se_u / mu_u).powi(2)).sqrt();
    (e, 2.0 * e * rel)
}

struct Receiver<'a> {
    params: &'a NetworkParams,
    profile: VisibilityProfile,
    run_index: u32,
}

fn measure(
    cfg: &ExperimentConfig,
    pipe: &Pipeline,
    rx: &Receiver<'_>,
    synth: &SynthConfig,
    noise_sample: &mut Vec<f64>,
    dump: Option<&Path>,
) -> Result<Measurement> {
    let raw = synthesize_run(rx.params, synth, rx.run_index, cfg.execution)?;
    let fx = raw.truth.fictitious_hz(synth);
    let out = pipe.run(&raw, &rx.profile, Some(fx), dump.is_some())?;
    let power = measure_faxion(&out.grand, &raw.truth, synth)?;
    let reach = out.grand.bin_width * cfg.pipeline.k_g as f64;
    noise_sample.extend(
        out.grand
            .freqs_hz
            .iter()
            .zip(&out.grand.values)
            .step_by(cfg.pipeline.k_g)
            .filter(|(f, _)| (**f - fx).abs() > reach)
            .map(|(_, v)| *v),
    );
    if let Some(dir) = dump {
        io::create_dir(dir)?;
        io::write_json(&dir.join(io::STAGE_STATS_FILE), &out.stats)?;
        io::write_grand(&dir.join(io::GRAND_FILE), &out.grand)?;
    }
    Ok(Measurement {
        power,
        predicted: predicted_significance(rx.params, synth, &raw.truth)?,
        start_hz: raw.truth.start_hz,
        stats: out.stats,
    })
}

/// Runs every repetition for both receivers and aggregates the faxion
/// powers. Returns the result and the wall-clock timing separately so the
/// result is reproducible.
pub fn run_campaign(cfg: &ExperimentConfig, dump_stages: bool) -> Result<(CampaignResult, Timing)> {
    cfg.validate()?;
    for w in cfg.warnings() {
        log::warn!("{w}");
    }
    let t0 = Instant::now();
    let pipe = Pipeline::new(cfg.pipeline.clone(), cfg.synth.n_bins(), cfg.execution)?;
    let receivers = [
        Receiver {
            params: &cfg.squeezed,
            profile: VisibilityProfile::from_model(&cfg.squeezed, &cfg.synth)?,
            run_index: 0,
        },
        Receiver {
            params: &cfg.unsqueezed,
            profile: VisibilityProfile::from_model(&cfg.unsqueezed, &cfg.synth)?,
            run_index: 1,
        },
    ];
    let sub_seeds: Vec<u64> = (0..cfg.repetitions).map(|i| derive_seed(cfg.seed, i as u64)).collect();
    let dump_root = cfg.output_dir.as_deref().filter(|_| dump_stages);

    let reps: Vec<(Repetition, Vec<f64>)> = cfg.execution.map_indexed(cfg.repetitions, |i| {
        let synth = SynthConfig {
            seed: sub_seeds[i],
            ..cfg.synth
        };
        let mut noise = Vec::new();
        let mut out = [None, None];
        let mut failure = None;
        for (slot, (rx, tag)) in out.iter_mut().zip(receivers.iter().zip(["squeezed", "unsqueezed"])) {
            let dir = dump_root.map(|d| io::rep_dir(d, i).join(tag));
            match measure(cfg, &pipe, rx, &synth, &mut noise, dir.as_deref()) {
                Ok(m) => *slot = Some(m),
                Err(e) => {
                    log::warn!("repetition {i} ({tag}) failed: {e}");
                    failure = Some(format!("{tag}: {e}"));
                    break;
                }
            }
        }
        let [squeezed, unsqueezed] = out;
        let rep = Repetition {
            index: i,
            sub_seed: sub_seeds[i],
            squeezed,
            unsqueezed,
            failure,
        };
        (rep, noise)
    });

    let failures: Vec<(usize, String)> = reps
        .iter()
        .filter_map(|(r, _)| r.failure.clone().map(|f| (r.index, f)))
        .collect();
    if failures.len() as f64 > cfg.max_failure_fraction * cfg.repetitions as f64 {
        return Err(Error::CampaignFailed {
            failed: failures.len(),
            total: cfg.repetitions,
        });
    }
    let ok: Vec<(&Measurement, &Measurement)> = reps
        .iter()
        .filter(|(r, _)| r.failure.is_none())
        .filter_map(|(r, _)| Some((r.squeezed.as_ref()?, r.unsqueezed.as_ref()?)))
        .collect();
    if ok.len() < 2 {
        return Err(Error::InsufficientData("fewer than two successful repetitions".into()));
    }
    let ps: Vec<f64> = ok.iter().map(|(s, _)| s.power).collect();
    let pu: Vec<f64> = ok.iter().map(|(_, u)| u.power).collect();
    let noise: Vec<f64> = reps.iter().flat_map(|(_, n)| n.iter().copied()).collect();
    let (mu_s, mu_s_se) = mean_se(&ps);
    let (mu_u, mu_u_se) = mean_se(&pu);
    let (e_m, e_m_se) = enhancement_ratio(mu_s, mu_s_se, mu_u, mu_u_se);
    let predicted_mu_s = mean(&ok.iter().map(|(s, _)| s.predicted).collect::<Vec<_>>());
    let predicted_mu_u = mean(&ok.iter().map(|(_, u)| u.predicted).collect::<Vec<_>>());
    let retention: Vec<f64> = ok
        .iter()
        .flat_map(|(s, u)| [s.stats.retention, u.stats.retention])
        .collect();

    let result = CampaignResult {
        powers_squeezed: ps,
        powers_unsqueezed: pu,
        mu_s,
        mu_s_se,
        mu_u,
        mu_u_se,
        sigma_g: std_dev(&noise),
        noise_mean: mean(&noise),
        e_m,
        e_m_se,
        e_t: compare_configs(&cfg.squeezed, &cfg.unsqueezed, &cfg.scan)?,
        e_t_protocol: (predicted_mu_s / predicted_mu_u).powi(2),
        predicted_mu_s,
        predicted_mu_u,
        mean_retention: mean(&retention),
        failures,
        repetitions: reps.into_iter().map(|(r, _)| r).collect(),
        profiles: Profiles {
            freqs_hz: receivers[0].profile.freqs_hz.clone(),
            squeezed: receivers[0].profile.values.clone(),
            unsqueezed: receivers[1].profile.values.clone(),
        },
        manifest: Manifest {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            sub_seeds,
            version: VERSION.into(),
            scale: cfg.scale,
            repetitions: cfg.repetitions,
        },
    };
    let wall = t0.elapsed().as_secs_f64();
    let timing = Timing {
        wall_seconds: wall,
        seconds_per_repetition: wall / cfg.repetitions as f64,
    };
    Ok((result, timing))
}

/// Compares a campaign against the thresholds in `cfg.checks`.
pub fn check_campaign(cfg: &ExperimentConfig, r: &CampaignResult) -> Vec<CheckOutcome> {
    let c = &cfg.checks;
    let combined = (r.e_m_se.powi(2) + c.e_t_uncertainty.powi(2)).sqrt();
    let mut out = vec![
        CheckOutcome {
            name: "E_m consistent with E_t".into(),
            value: (r.e_m - r.e_t).abs() / combined,
            limit: format!("<= {} combined standard errors", c.e_t_sigmas),
            pass: (r.e_m - r.e_t).abs() <= c.e_t_sigmas * combined,
        },
        CheckOutcome {
            name: "mean bin retention".into(),
            value: r.mean_retention,
            limit: format!(">= {}", c.min_retention),
            pass: r.mean_retention >= c.min_retention,
        },
    ];
    if let Some([lo, hi]) = c.e_m_range {
        out.push(CheckOutcome {
            name: "E_m window".into(),
            value: r.e_m,
            limit: format!("[{lo}, {hi}]"),
            pass: (lo..=hi).contains(&r.e_m),
        });
    }
    out
}

/// Writes the result files of a campaign into `dir`.
pub fn write_campaign(dir: &Path, cfg: &ExperimentConfig, r: &CampaignResult, t: &Timing) -> Result<()> {
    io::create_dir(dir)?;
    io::write_json(&dir.join("config.json"), cfg)?;
    io::write_json(&dir.join("result.json"), r)?;
    io::write_json(&dir.join("manifest.json"), &r.manifest)?;
    io::write_json(&dir.join("timing.json"), t)?;
    let idx: Vec<f64> = (0..r.powers_squeezed.len()).map(|i| i as f64).collect();
    io::write_columns(
        &dir.join("powers.csv"),
        &["index", "squeezed", "unsqueezed"],
        &[&idx, &r.powers_squeezed, &r.powers_unsqueezed],
    )?;
    io::write_columns(
        &dir.join("profiles.csv"),
        &["frequency_hz", "squeezed", "unsqueezed"],
        &[&r.profiles.freqs_hz, &r.profiles.squeezed, &r.profiles.unsqueezed],
    )
}
