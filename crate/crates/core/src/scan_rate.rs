//! Scan rates, enhancement factors and optimal couplings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::integrate::{integrate, integrate_real_line, Integral, Tolerance};
use crate::network::{visibility, NetworkParams};
use crate::optimize::golden_max;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// Signal linewidth Δ_a, Hz.
    pub delta_a: f64,
    /// Target integrated SNR ᾱ_I.
    pub target_snr: f64,
    /// Integrate over [−half_width, half_width] rad/s instead of the whole
    /// real line.
    pub half_width: Option<f64>,
    pub rel_tol: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            delta_a: 9e3,
            target_snr: 1.0,
            half_width: None,
            rel_tol: 1e-8,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_a > 0.0 && self.delta_a.is_finite()) {
            return Err(Error::param("delta_a", "must be positive"));
        }
        if !(self.target_snr > 0.0 && self.target_snr.is_finite()) {
            return Err(Error::param("target_snr", "must be positive"));
        }
        if let Some(h) = self.half_width {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::param("half_width", "must be positive"));
            }
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::param("rel_tol", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// SNR of a single tuning step, √(τΔ_a)·α/2.
pub fn snr_single_step(alpha: f64, tau: f64, delta_a: f64) -> Result<f64> {
    for (name, v) in [("alpha", alpha), ("tau", tau), ("delta_a", delta_a)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(name, "must be positive"));
        }
    }
    Ok((tau * delta_a).sqrt() * alpha / 2.0)
}

/// Half width at half maximum of α(ω), rad/s. The lossy visibility is a
/// Lorentzian in ω, so this is also the natural quadrature scale.
pub fn visibility_half_width(p: &NetworkParams) -> f64 {
    let lam = p.lambda_t;
    let q = 1.0 - lam + lam / p.g_s;
    let s = p.kappa_m + p.kappa_l;
    let d = p.kappa_m - p.kappa_l;
    let a = (1.0 - lam) * s * s / 4.0 + lam * (p.kappa_l * p.kappa_m + q * d * d / 4.0);
    let c = (1.0 - lam) + lam * q;
    (a / c).sqrt()
}

/// ∫ α²(ω) dω/2π, Hz.
pub fn visibility_integral(p: &NetworkParams, cfg: &ScanConfig) -> Result<Integral> {
    p.validate()?;
    cfg.validate()?;
    if p.lambda_t == 0.0 {
        return Err(Error::InvalidSignal(
            "lambda_t = 0: no signal reaches the receiver".into(),
        ));
    }
    // Visibility errors can only come from n_A <= 0 and are surfaced here.
    visibility(p, 0.0)?;
    let f = |w: f64| {
        let a = visibility(p, w).unwrap_or(f64::NAN);
        a * a
    };
    let tol = Tolerance::relative(cfg.rel_tol * 1e-2);
    let mut r = match cfg.half_width {
        None => integrate_real_line(f, visibility_half_width(p), tol)?,
        Some(h) => integrate(f, -h, h, tol)?,
    };
    r.value /= 2.0 * std::f64::consts::PI;
    r.error /= 2.0 * std::f64::consts::PI;
    Ok(r)
}

/// Scan rate R = Δ_a/(4ᾱ_I²)·∫α² dω/2π, Hz/s.
pub fn scan_rate(p: &NetworkParams, cfg: &ScanConfig) -> Result<f64> {
    let i = visibility_integral(p, cfg)?;
    Ok(cfg.delta_a / (4.0 * cfg.target_snr * cfg.target_snr) * i.value)
}

/// Closed-form scan rate for the lossless chain (λ = 1).
pub fn scan_rate_closed_form(p: &NetworkParams, cfg: &ScanConfig) -> Result<f64> {
    p.validate()?;
    cfg.validate()?;
    if p.lambda_t != 1.0 {
        return Err(Error::param("lambda_t", "closed form requires lambda_t = 1"));
    }
    let d = p.kappa_l - p.kappa_m;
    let bracket = p.kappa_l * p.kappa_m + d * d / (4.0 * p.g_s);
    let nt = p.n_t + 0.5;
    let num = cfg.delta_a * p.g_s.sqrt() * (p.n_a * p.kappa_a * p.kappa_m).powi(2);
    Ok(num / (16.0 * cfg.target_snr.powi(2) * nt * nt * bracket.powf(1.5)))
}

/// κ_m maximizing the scan rate, searched on log κ_m over [κ_l/10, 10⁴κ_l].
pub fn optimal_coupling(p: &NetworkParams, cfg: &ScanConfig) -> Result<f64> {
    p.validate()?;
    let rate = |kappa_m: f64| scan_rate(&NetworkParams { kappa_m, ..*p }, cfg);
    let lo = (p.kappa_l / 10.0).ln();
    let hi = (p.kappa_l * 1e4).ln();
    let best = golden_max(|x| rate(x.exp()), lo, hi, 1e-4)?;
    let k = best.x.exp();
    let h = 1e-3;
    let slope = (rate(k * (1.0 + h))? - rate(k * (1.0 - h))?) / (2.0 * h * best.value);
    if slope.abs() >= 1e-3 {
        return Err(Error::NotStationary { at: k, slope });
    }
    Ok(k)
}

/// Ratio of ∫α² between two configurations.
pub fn compare_configs(
    squeezed: &NetworkParams,
    unsqueezed: &NetworkParams,
    cfg: &ScanConfig,
) -> Result<f64> {
    let s = visibility_integral(squeezed, cfg)?;
    let u = visibility_integral(unsqueezed, cfg)?;
    Ok(s.value / u.value)
}

/// Single- and double-quadrature SNRs for the same signal and integration
/// time, without squeezing. Returns `(snr_1q, snr_2q)`.
pub fn quadrature_equivalence(tau: f64, delta_a: f64, alpha_2q: f64) -> Result<(f64, f64)> {
    for (name, v) in [("tau", tau), ("delta_a", delta_a), ("alpha_2q", alpha_2q)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::param(name, "must be non-negative and finite"));
        }
    }
    if delta_a == 0.0 {
        return Err(Error::param("delta_a", "must be positive"));
    }
    let bw_2q = delta_a;
    let snr_2q = (2.0 * tau * bw_2q / 2.0).sqrt() * (delta_a / bw_2q) * alpha_2q;
    let bw_1q = 2.0 * delta_a;
    let alpha_1q = 2.0 * alpha_2q;
    let snr_1q = (tau * bw_1q / 2.0).sqrt() * (delta_a / bw_1q) * alpha_1q;
    Ok((snr_1q, snr_2q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFailure {
    pub gs_index: usize,
    pub coupling_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancementGrid {
    pub eta: f64,
    pub gs_axis: Vec<f64>,
    pub coupling_axis: Vec<f64>,
    /// `values[i][j]` is E_t at `gs_axis[i]`, `coupling_axis[j]`; `None` marks
    /// a cell whose integral failed.
    pub values: Vec<Vec<Option<f64>>>,
    pub failures: Vec<GridFailure>,
}

impl EnhancementGrid {
    pub fn get(&self, gs_index: usize, coupling_index: usize) -> Option<f64> {
        self.values[gs_index][coupling_index]
    }

    /// CSV with columns `G_s,coupling_ratio,E_t`; invalid cells are `nan`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("G_s,coupling_ratio,E_t\n");
        for (i, g) in self.gs_axis.iter().enumerate() {
            for (j, c) in self.coupling_axis.iter().enumerate() {
                match self.values[i][j] {
                    Some(v) => writeln!(s, "{g},{c},{v}").unwrap(),
                    None => writeln!(s, "{g},{c},nan").unwrap(),
                }
            }
        }
        s
    }
}

fn ascending(axis: &[f64]) -> bool {
    !axis.is_empty() && axis.windows(2).all(|w| w[0] < w[1]) && axis.iter().all(|x| x.is_finite())
}

/// Scan-rate enhancement over a (G_s, κ_m/κ_l) grid, normalized by the
/// unsqueezed, twice-overcoupled configuration at the same η.
pub fn enhancement_grid(
    eta: f64,
    gs_axis: &[f64],
    coupling_axis: &[f64],
    base: &NetworkParams,
    cfg: &ScanConfig,
    exec: Execution,
) -> Result<EnhancementGrid> {
    if !ascending(gs_axis) {
        return Err(Error::param("gs_axis", "must be nonempty and ascending"));
    }
    if !ascending(coupling_axis) {
        return Err(Error::param("coupling_axis", "must be nonempty and ascending"));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::param("eta", "must lie in [0, 1]"));
    }
    let base = base.with_eta(eta);
    let reference = NetworkParams {
        g_s: 1.0,
        ..base.with_coupling_ratio(2.0)
    };
    let norm = visibility_integral(&reference, cfg)?.value;
    let nc = coupling_axis.len();
    let cells = exec.map_indexed(gs_axis.len() * nc, |k| {
        let p = NetworkParams {
            g_s: gs_axis[k / nc],
            ..base.with_coupling_ratio(coupling_axis[k % nc])
        };
        visibility_integral(&p, cfg).map(|i| i.value / norm)
    });
    let mut values = vec![vec![None; nc]; gs_axis.len()];
    let mut failures = Vec::new();
    for (k, cell) in cells.into_iter().enumerate() {
        match cell {
            Ok(v) => values[k / nc][k % nc] = Some(v),
            Err(e) => failures.push(GridFailure {
                gs_index: k / nc,
                coupling_index: k % nc,
                reason: e.to_string(),
            }),
        }
    }
    Ok(EnhancementGrid {
        eta,
        gs_axis: gs_axis.to_vec(),
        coupling_axis: coupling_axis.to_vec(),
        values,
        failures,
    })
}

/// E_t at a single (G_s, κ_m/κ_l) point, normalized as in [`enhancement_grid`].
pub fn enhancement(eta: f64, g_s: f64, coupling_ratio: f64, base: &NetworkParams, cfg: &ScanConfig) -> Result<f64> {
    let base = base.with_eta(eta);
    let reference = NetworkParams {
        g_s: 1.0,
        ..base.with_coupling_ratio(2.0)
    };
    let p = NetworkParams {
        g_s,
        ..base.with_coupling_ratio(coupling_ratio)
    };
    compare_configs(&p, &reference, cfg)
}

/// Best E_t at fixed G_s and η, optimizing the coupling. Returns
/// `(E_t, kappa_m / kappa_l)`.
pub fn best_enhancement(eta: f64, g_s: f64, base: &NetworkParams, cfg: &ScanConfig) -> Result<(f64, f64)> {
    let p = NetworkParams {
        g_s,
        ..base.with_eta(eta)
    };
    let k = optimal_coupling(&p, cfg)?;
    let ratio = k / p.kappa_l;
    Ok((enhancement(eta, g_s, ratio, base, cfg)?, ratio))
}

/// Log-spaced axis of `n` points from `lo` to `hi` inclusive.
pub fn log_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{angular, from_db};
    use proptest::prelude::*;

    fn lossless(ratio: f64, g_s: f64) -> NetworkParams {
        NetworkParams {
            g_s,
            lambda_t: 1.0,
            ..NetworkParams::default().with_coupling_ratio(ratio)
        }
    }

    // α = K/(a + cω²) ⇒ ∫α² dω/2π = K²/(4 a^{3/2} c^{1/2}).
    fn integral_oracle(p: &NetworkParams) -> f64 {
        let lam = p.lambda_t;
        let q = 1.0 - lam + lam / p.g_s;
        let (km, kl) = (p.kappa_m, p.kappa_l);
        let a = (1.0 - lam) * (km + kl).powi(2) / 4.0 + lam * (kl * km + q * (km - kl).powi(2) / 4.0);
        let c = (1.0 - lam) + lam * q;
        let k = lam * p.n_a * p.kappa_a * km / (p.n_t + 0.5);
        k * k / (4.0 * a.powf(1.5) * c.sqrt())
    }

    #[test]
    fn single_step_snr_examples() {
        assert!((snr_single_step(1.0, 1.0, 4.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((snr_single_step(0.5, 0.32, 9e3).unwrap() - 13.416).abs() < 1e-3);
        let a = snr_single_step(0.3, 2.0, 100.0).unwrap();
        let b = snr_single_step(0.3, 1.0, 100.0).unwrap();
        assert!((a / b - 2f64.sqrt()).abs() < 1e-14);
        assert!(snr_single_step(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn lossy_integral_matches_oracle() {
        for p in [NetworkParams::squeezed_preset(), NetworkParams::unsqueezed_preset()] {
            let i = visibility_integral(&p, &ScanConfig::default()).unwrap();
            assert!((i.value / integral_oracle(&p) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn finite_bounds_truncate_the_tails() {
        let p = NetworkParams::squeezed_preset();
        let full = visibility_integral(&p, &ScanConfig::default()).unwrap().value;
        let cut = ScanConfig {
            half_width: Some(20.0 * p.kappa_t()),
            ..ScanConfig::default()
        };
        let part = visibility_integral(&p, &cut).unwrap().value;
        assert!(part < full);
        assert!(1.0 - part / full < 1e-4);
    }

    #[test]
    fn unsqueezed_optimum_is_twice_overcoupled() {
        let k = optimal_coupling(&lossless(1.0, 1.0), &ScanConfig::default()).unwrap();
        assert!((k / angular(100e3) / 2.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn optimal_coupling_matches_dense_scan() {
        let cfg = ScanConfig::default();
        for p in [lossless(1.0, 20.0), lossless(1.0, 20.0).with_eta(0.69)] {
            let k = optimal_coupling(&p, &cfg).unwrap() / p.kappa_l;
            let grid = log_axis(0.1, 1e4, 4001);
            let rates: Vec<f64> = grid
                .iter()
                .map(|&r| scan_rate(&p.with_coupling_ratio(r), &cfg).unwrap())
                .collect();
            let best = (0..grid.len()).max_by(|&i, &j| rates[i].total_cmp(&rates[j])).unwrap();
            // unimodal: increasing before the peak, decreasing after
            assert!(rates[..best].windows(2).all(|w| w[1] >= w[0]));
            assert!(rates[best..].windows(2).all(|w| w[1] <= w[0]));
            let step = grid[1] / grid[0];
            assert!(k / grid[best] < step && grid[best] / k < step, "{k} vs {}", grid[best]);
            if p.lambda_t == 1.0 {
                assert!((k / 40.0 - 1.0).abs() < 0.05, "{k}");
            } else {
                assert!((2.0..=40.0).contains(&k), "{k}");
            }
        }
    }

    #[test]
    fn flat_objective_is_reported() {
        let p = NetworkParams {
            lambda_t: 0.0,
            ..NetworkParams::default()
        };
        assert!(optimal_coupling(&p, &ScanConfig::default()).is_err());
    }

    #[test]
    fn measured_configuration_enhancement() {
        let e = compare_configs(
            &NetworkParams::squeezed_preset(),
            &NetworkParams::unsqueezed_preset(),
            &ScanConfig::default(),
        )
        .unwrap();
        assert!((e - 2.11).abs() < 0.07, "{e}");
    }

    #[test]
    fn grid_normalization_cell_is_one() {
        let g = enhancement_grid(
            1.0,
            &[1.0, 10.0],
            &[1.0, 2.0, 5.0],
            &NetworkParams::default(),
            &ScanConfig::default(),
            Execution::Serial,
        )
        .unwrap();
        assert!((g.get(0, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!(g.failures.is_empty());
        assert!(g.to_csv().starts_with("G_s,coupling_ratio,E_t\n1,1,"));
        assert_eq!(g.to_csv().lines().count(), 7);
    }

    #[test]
    fn grid_rejects_unsorted_axes() {
        let r = enhancement_grid(
            1.0,
            &[10.0, 1.0],
            &[2.0],
            &NetworkParams::default(),
            &ScanConfig::default(),
            Execution::Serial,
        );
        assert!(r.is_err());
    }

    #[test]
    fn grid_is_identical_serial_and_parallel() {
        let gs = log_axis(1.0, 100.0, 7);
        let c = log_axis(0.5, 300.0, 9);
        let base = NetworkParams::default();
        let cfg = ScanConfig::default();
        let a = enhancement_grid(0.69, &gs, &c, &base, &cfg, Execution::Serial).unwrap();
        let b = enhancement_grid(0.69, &gs, &c, &base, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn plateau_cell() {
        let e = enhancement(0.69, 25.0, 5.0, &NetworkParams::default(), &ScanConfig::default()).unwrap();
        assert!((e - 2.2).abs() < 0.1, "{e}");
        let _ = from_db(13.0);
    }

    #[test]
    fn quadrature_equivalence_examples() {
        let (a, b) = quadrature_equivalence(0.0, 9e3, 0.3).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
        let (a1, b1) = quadrature_equivalence(0.32, 9e3, 0.01).unwrap();
        let (a3, b3) = quadrature_equivalence(0.32, 9e3, 0.03).unwrap();
        assert!((a3 / a1 - 3.0).abs() < 1e-12 && (b3 / b1 - 3.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn lossless_rate_matches_closed_form(lr in -1.0f64..3.0, lg in 0.0f64..3.0, nt in 0.0f64..5.0) {
            let p = NetworkParams { n_t: nt, ..lossless(10f64.powf(lr), 10f64.powf(lg)) };
            let cfg = ScanConfig::default();
            let q = scan_rate(&p, &cfg).unwrap();
            let c = scan_rate_closed_form(&p, &cfg).unwrap();
            prop_assert!((q / c - 1.0).abs() < 1e-6);
        }

        #[test]
        fn ratio_is_invariant_to_signal_rescaling(s in 0.01f64..100.0, t in 0.01f64..100.0) {
            let cfg = ScanConfig::default();
            let a = NetworkParams::squeezed_preset();
            let b = NetworkParams::unsqueezed_preset();
            let e0 = compare_configs(&a, &b, &cfg).unwrap();
            let scale = |p: NetworkParams| NetworkParams { n_a: p.n_a * s, kappa_a: p.kappa_a * t, ..p };
            let cfg2 = ScanConfig { target_snr: 3.0, delta_a: 1e3, ..cfg };
            let e1 = compare_configs(&scale(a), &scale(b), &cfg2).unwrap();
            prop_assert!((e1 / e0 - 1.0).abs() < 1e-9);
        }

        #[test]
        fn rate_increases_with_squeezing(lr in 0.01f64..3.0, g1 in 1.0f64..1e3, g2 in 1.0f64..1e3) {
            prop_assume!((g1 - g2).abs() > 1e-3 * g1.max(g2));
            let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            let cfg = ScanConfig::default();
            let r = 10f64.powf(lr);
            prop_assert!(scan_rate(&lossless(r, hi), &cfg).unwrap() > scan_rate(&lossless(r, lo), &cfg).unwrap());
        }

        #[test]
        fn single_and_double_quadrature_agree(tau in 1e-3f64..1e3, d in 1.0f64..1e6, a in 1e-9f64..10.0) {
            let (s1, s2) = quadrature_equivalence(tau, d, a).unwrap();
            prop_assert!((s1 / s2 - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn lossless_diagonal_grows_monotonically() {
        let cfg = ScanConfig::default();
        let base = NetworkParams::default();
        let gs = log_axis(1.0, 1e3, 13);
        let e: Vec<f64> = gs
            .iter()
            .map(|&g| enhancement(1.0, g, 2.0 * g, &base, &cfg).unwrap())
            .collect();
        assert!(e.windows(2).all(|w| w[1] > w[0]));
        assert!(e.last().unwrap() > &100.0);
    }
}
