//! Theory tables: visibility curves, enhancement grids, optimal couplings
//! and scan-rate ratios for the configured receivers.

use serde::{Deserialize, Serialize};

use crate::constants::{angular, from_db};
use crate::error::Result;
use crate::exec::Execution;
use crate::network::{relative_visibility, NetworkParams};
use crate::scan_rate::{
    best_enhancement, compare_configs, enhancement, enhancement_grid, log_axis, optimal_coupling,
    EnhancementGrid, ScanConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub eta: f64,
    /// Squeezer gain of the squeezed curves, dB.
    pub g_s_db: f64,
    pub grid_points: usize,
    pub gs_max: f64,
    pub coupling_max: f64,
    pub curve_points: usize,
    /// Curves span ±curve_span_hz around resonance.
    pub curve_span_hz: f64,
    /// Efficiency of the high-gain projection.
    pub eta_high: f64,
    pub gs_high_max: f64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            eta: 0.69,
            g_s_db: 13.0,
            grid_points: 50,
            gs_max: 100.0,
            coupling_max: 1000.0,
            curve_points: 401,
            curve_span_hz: 2e6,
            eta_high: 0.91,
            gs_high_max: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCase {
    pub name: String,
    pub coupling_ratio: f64,
    pub g_s: f64,
    /// α/α_max at each curve frequency.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCurves {
    pub freqs_hz: Vec<f64>,
    pub cases: Vec<AlphaCase>,
}

impl AlphaCurves {
    pub fn to_columns(&self) -> (Vec<String>, Vec<&[f64]>) {
        let mut header = vec!["frequency_hz".to_string()];
        header.extend(self.cases.iter().map(|c| c.name.clone()));
        let mut cols: Vec<&[f64]> = vec![&self.freqs_hz];
        cols.extend(self.cases.iter().map(|c| c.values.as_slice()));
        (header, cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighGainProjection {
    pub eta: f64,
    pub e_t: f64,
    pub g_s: f64,
    pub coupling_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub curves: AlphaCurves,
    pub grid_lossless: EnhancementGrid,
    pub grid_lossy: EnhancementGrid,
    /// Optimal κ_m/κ_l of the configured receivers.
    pub optimal_coupling_squeezed: f64,
    pub optimal_coupling_unsqueezed: f64,
    /// Configured squeezed vs unsqueezed receiver.
    pub e_t: f64,
    /// Near-critical squeezed vs near-critical unsqueezed.
    pub e_c1: f64,
    /// Overcoupled unsqueezed vs near-critical squeezed.
    pub e_c2_vs_squeezed: f64,
    /// Overcoupled unsqueezed vs near-critical unsqueezed.
    pub e_c2_vs_unsqueezed: f64,
    /// E_t at G_s = 25, κ_m = 5κ_l on the lossy grid.
    pub plateau: f64,
    pub high_gain: HighGainProjection,
}

fn case(base: &NetworkParams, ratio: f64, g_s: f64) -> NetworkParams {
    NetworkParams {
        g_s,
        ..base.with_coupling_ratio(ratio)
    }
}

/// Computes every theory table for the receiver pair.
pub fn theory_report(
    squeezed: &NetworkParams,
    unsqueezed: &NetworkParams,
    scan: &ScanConfig,
    cfg: &TheoryConfig,
    exec: Execution,
) -> Result<TheoryReport> {
    let base = NetworkParams::default().with_eta(cfg.eta);
    let g = from_db(cfg.g_s_db);
    let (over, near) = (10.0, 1.5);
    let named = [
        ("squeezed_overcoupled", over, g),
        ("squeezed_near_critical", near, g),
        ("unsqueezed_overcoupled", over, 1.0),
        ("unsqueezed_near_critical", near, 1.0),
    ];
    let n = cfg.curve_points.max(2);
    let freqs: Vec<f64> = (0..n)
        .map(|i| -cfg.curve_span_hz + 2.0 * cfg.curve_span_hz * i as f64 / (n - 1) as f64)
        .collect();
    let mut cases = Vec::new();
    for (name, ratio, g_s) in named {
        let p = case(&base, ratio, g_s);
        let values = freqs
            .iter()
            .map(|&f| relative_visibility(&p, angular(f)))
            .collect::<Result<Vec<_>>>()?;
        cases.push(AlphaCase {
            name: name.into(),
            coupling_ratio: ratio,
            g_s,
            values,
        });
    }

    let gs_axis = log_axis(1.0, cfg.gs_max, cfg.grid_points);
    let coupling_axis = log_axis(1.0, cfg.coupling_max, cfg.grid_points);
    let grid_lossless = enhancement_grid(1.0, &gs_axis, &coupling_axis, &base, scan, exec)?;
    let grid_lossy = enhancement_grid(cfg.eta, &gs_axis, &coupling_axis, &base, scan, exec)?;

    let ratio_of = |p: &NetworkParams| optimal_coupling(p, scan).map(|k| k / p.kappa_l);
    let pair = |a: (f64, f64), b: (f64, f64)| {
        compare_configs(&case(&base, a.0, a.1), &case(&base, b.0, b.1), scan)
    };

    let gs_high = log_axis(1.0, cfg.gs_high_max, 17);
    let mut high = HighGainProjection {
        eta: cfg.eta_high,
        e_t: f64::NEG_INFINITY,
        g_s: f64::NAN,
        coupling_ratio: f64::NAN,
    };
    for g_s in gs_high {
        let (e, r) = best_enhancement(cfg.eta_high, g_s, &base, scan)?;
        if e > high.e_t {
            high = HighGainProjection {
                eta: cfg.eta_high,
                e_t: e,
                g_s,
                coupling_ratio: r,
            };
        }
    }

    Ok(TheoryReport {
        curves: AlphaCurves {
            freqs_hz: freqs,
            cases,
        },
        grid_lossless,
        grid_lossy,
        optimal_coupling_squeezed: ratio_of(squeezed)?,
        optimal_coupling_unsqueezed: ratio_of(unsqueezed)?,
        e_t: compare_configs(squeezed, unsqueezed, scan)?,
        e_c1: pair((near, g), (near, 1.0))?,
        e_c2_vs_squeezed: pair((over, 1.0), (near, g))?,
        e_c2_vs_unsqueezed: pair((over, 1.0), (near, 1.0))?,
        plateau: enhancement(cfg.eta, 25.0, 5.0, &base, scan)?,
        high_gain: high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_reproduces_reference_numbers() {
        let cfg = TheoryConfig {
            grid_points: 8,
            curve_points: 21,
            ..TheoryConfig::default()
        };
        let r = theory_report(
            &NetworkParams::squeezed_preset(),
            &NetworkParams::unsqueezed_preset(),
            &ScanConfig::default(),
            &cfg,
            Execution::Parallel,
        )
        .unwrap();
        assert!((r.e_t - 2.11).abs() < 0.07, "{}", r.e_t);
        assert!((r.e_c1 - 1.77).abs() < 0.03, "{}", r.e_c1);
        assert!((r.e_c2_vs_unsqueezed - 0.52).abs() < 0.02);
        assert!((r.plateau - 2.2).abs() < 0.1);
        assert_eq!(r.grid_lossless.get(0, 0).map(|v| v < 1.0), Some(true));
        assert_eq!(r.curves.cases.len(), 4);
        // near-critical unsqueezed peaks at α_max
        let mid = r.curves.cases[3].values[10];
        assert!(mid < 1.0 && mid > 0.9, "{mid}");
        assert!((r.curves.cases[0].values[10] - 0.589).abs() < 0.01);
        assert!(r.high_gain.e_t > 5.0);
        assert!(r.optimal_coupling_squeezed > r.optimal_coupling_unsqueezed);
    }
}
