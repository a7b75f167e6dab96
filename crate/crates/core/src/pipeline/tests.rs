use super::*;
use crate::network::NetworkParams;
use crate::stats::{ks_standard_normal, mean};
use crate::synth::{synthesize_run, FaxionConfig};

fn synth_cfg(power_fraction: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        if_band: 200e3,
        n_spectra: 21,
        seed,
        faxion: FaxionConfig {
            power_fraction,
            start_window: 100e3,
            ..FaxionConfig::default()
        },
        ..SynthConfig::default()
    }
}

fn run(p: &NetworkParams, s: &SynthConfig, exec: Execution) -> (RawSpectrumSet, PipelineOutput) {
    let raw = synthesize_run(p, s, 0, exec).unwrap();
    let profile = VisibilityProfile::from_model(p, s).unwrap();
    let pipe = Pipeline::new(PipelineConfig::default(), s.n_bins(), exec).unwrap();
    let fx = raw.truth.fictitious_hz(s);
    let out = pipe.run(&raw, &profile, Some(fx), true).unwrap();
    (raw, out)
}

#[test]
fn config_validation() {
    assert!(PipelineConfig::default().validate().is_ok());
    let bad = PipelineConfig {
        k_g: 40,
        ..PipelineConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = PipelineConfig {
        sg1: SgParams::new(10, 10),
        ..PipelineConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = PipelineConfig {
        tuning_shift: 150.0,
        ..PipelineConfig::default()
    };
    assert!(bad.shift_bins(100.0).is_err());
    assert_eq!(PipelineConfig::default().shift_bins(100.0).unwrap(), 100);
    let json = serde_json::to_value(PipelineConfig::default()).unwrap();
    assert_eq!(json["K_g"], 41);
    assert_eq!(json["sg1"]["half_width"], 500);
}

#[test]
fn noise_only_statistics() {
    let p = NetworkParams::squeezed_preset();
    let (raw, out) = run(&p, &synth_cfg(0.0, 4), Execution::Parallel);
    let st = &out.stats;
    assert!(st.retention > 0.99, "{}", st.retention);
    assert!((st.sigma_p / st.sigma_p_expected - 1.0).abs() < 0.1, "{st:?}");
    // the per-spectrum flattening removes noise at the template scale
    assert!(st.sigma_g > 0.3 && st.sigma_g < 1.05, "{st:?}");
    assert!(st.grand_mean.abs() < 0.2 && (0.8..1.2).contains(&st.grand_std), "{st:?}");
    let stages = out.stages.unwrap();
    let n_half = raw.n_bins() as f64;
    let tol = 3.0 * st.sigma_p_expected / n_half.sqrt();
    for s in &stages.processed {
        let kept: Vec<f64> = s[s.len() / 2..].iter().copied().filter(|v| v.is_finite()).collect();
        assert!(mean(&kept).abs() < tol + 1e-3, "{}", mean(&kept));
    }
    let thin: Vec<f64> = out.grand.values.iter().step_by(41).copied().collect();
    assert!(ks_standard_normal(&thin).p_value > 1e-3);
}

#[test]
fn faxion_is_recovered_and_not_masked() {
    let p = NetworkParams::squeezed_preset();
    let s = synth_cfg(0.5, 7);
    let (raw, out) = run(&p, &s, Execution::Parallel);
    let z = measure_faxion(&out.grand, &raw.truth, &s).unwrap();
    let ideal = predicted_significance(&p, &s, &raw.truth).unwrap();
    assert!(z > 5.0, "{z}");
    assert!(z < 1.2 * ideal, "{z} vs {ideal}");
    assert!(out.stats.retention > 0.99);
    let peak = out
        .grand
        .values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(z > 0.8 * peak);
}

#[test]
fn weak_faxion_invisible_in_single_spectra() {
    let p = NetworkParams::squeezed_preset();
    let s = synth_cfg(0.01, 8);
    let (_, out) = run(&p, &s, Execution::Serial);
    let st = out.stats.clone();
    let stages = out.stages.unwrap();
    let first = &stages.processed[0];
    let max = first.iter().filter(|v| v.is_finite()).cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(max < 5.0 * st.sigma_p, "{max} vs {}", st.sigma_p);
}

#[test]
fn deterministic_and_parallel_invariant() {
    let p = NetworkParams::unsqueezed_preset();
    let s = synth_cfg(0.2, 11);
    let (_, a) = run(&p, &s, Execution::Parallel);
    let (_, b) = run(&p, &s, Execution::Parallel);
    let (_, c) = run(&p, &s, Execution::Serial);
    assert_eq!(a.grand, b.grand);
    assert_eq!(a.grand, c.grand);
    assert_eq!(a.rebinned, c.rebinned);
}

#[test]
fn constant_profile_scaling_changes_nothing() {
    let p = NetworkParams::squeezed_preset();
    let s = synth_cfg(0.2, 12);
    let raw = synthesize_run(&p, &s, 0, Execution::Parallel).unwrap();
    let pipe = Pipeline::new(PipelineConfig::default(), s.n_bins(), Execution::Parallel).unwrap();
    let base = VisibilityProfile::from_model(&p, &s).unwrap();
    let mut scaled = base.clone();
    scaled.values.iter_mut().for_each(|v| *v *= 0.37);
    let a = pipe.run(&raw, &base, None, false).unwrap().grand;
    let b = pipe.run(&raw, &scaled, None, false).unwrap().grand;
    assert_eq!(a.len(), b.len());
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-10, "{x} vs {y}");
    }
}

#[test]
fn grand_response_is_linear_in_power() {
    // same seed means the same Gamma draws, so the noise cancels in the
    // difference
    let p = NetworkParams::squeezed_preset();
    let z = |pf: f64| {
        let s = synth_cfg(pf, 21);
        let (raw, out) = run(&p, &s, Execution::Parallel);
        measure_faxion(&out.grand, &raw.truth, &s).unwrap()
    };
    let (z0, z1, z2) = (z(0.0), z(0.1), z(0.2));
    let ratio = (z2 - z0) / (z1 - z0);
    assert!((ratio - 2.0).abs() < 0.1, "{z0} {z1} {z2}");
}

#[test]
fn rescaled_tone_is_detuning_independent() {
    let p = NetworkParams::squeezed_preset();
    let s = SynthConfig {
        faxion: FaxionConfig {
            power_fraction: 0.1,
            ..FaxionConfig::default()
        },
        ..synth_cfg(0.1, 0)
    };
    let profile = VisibilityProfile::from_model(&p, &s).unwrap();
    let noise = noise_profile(&p, &s).unwrap();
    let n = s.n_bins();
    let window_sum = |tone_hz: f64| {
        let e = faxion_excess(&p, &s, tone_hz).unwrap();
        let y: Vec<f64> = e.iter().zip(&noise).map(|(e, n)| e / n).collect();
        let r = rescale(&symmetrize(&y), &profile, 1.0, 1e-6).unwrap();
        let centre = n + (tone_hz / s.bin_width).floor() as usize;
        r.values[centre - 50..=centre + 50].iter().sum::<f64>()
    };
    let near = window_sum(20_050.0);
    let far = window_sum(80_050.0);
    assert!((near / far - 1.0).abs() < 0.02, "{near} vs {far}");
    // squeezed visibility falls off with detuning, so variance grows
    let half = &profile.values[n..];
    assert!(half.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn wrong_lengths_are_rejected() {
    let s = synth_cfg(0.0, 0);
    let pipe = Pipeline::new(PipelineConfig::default(), s.n_bins(), Execution::Serial).unwrap();
    let profile = VisibilityProfile::flat(2 * s.n_bins(), s.bin_width);
    assert!(pipe
        .run_spectra(&[vec![1.0; 10]], 100.0, 32.0, &profile, None, false)
        .is_err());
    assert!(Pipeline::new(PipelineConfig::default(), 5, Execution::Serial).is_err());
}
