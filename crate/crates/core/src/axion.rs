//! Physical axion/haloscope parameters mapped onto the fictitious generator
//! model (n_A, κ_a), plus classical-regime checks.

use serde::{Deserialize, Serialize};

use crate::constants::{
    angular, gev_per_cm3_to_si, liters_to_m3, per_ev_to_per_joule, HBAR, MU_0, SPEED_OF_LIGHT,
};
use crate::error::{Error, Result};
use crate::network::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HaloscopePhysical {
    /// Local dark-matter density, GeV/cm³.
    pub rho_a: f64,
    /// Static field, T.
    #[serde(rename = "B0")]
    pub b0: f64,
    /// Axion–photon coupling, eV⁻¹ (sign is irrelevant).
    pub g_agg: f64,
    /// Axion linewidth, Hz.
    pub delta_a: f64,
    /// Axion frequency, rad/s.
    pub omega_a: f64,
    /// Cavity volume, liters.
    #[serde(rename = "V")]
    pub volume: f64,
    #[serde(rename = "C_mnl")]
    pub c_mnl: f64,
}

impl Default for HaloscopePhysical {
    /// Representative HAYSTAC-like values for a 5 GHz KSVZ axion.
    fn default() -> Self {
        HaloscopePhysical {
            rho_a: 0.45,
            b0: 9.0,
            g_agg: -7.7e-24,
            delta_a: 5e3,
            omega_a: angular(5e9),
            volume: 1.5,
            c_mnl: 0.5,
        }
    }
}

impl HaloscopePhysical {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho_a", self.rho_a),
            ("B0", self.b0),
            ("delta_a", self.delta_a),
            ("omega_a", self.omega_a),
            ("V", self.volume),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("{v} must be positive and finite")));
            }
        }
        if !(self.g_agg != 0.0 && self.g_agg.is_finite()) {
            return Err(Error::param("g_agg", "must be nonzero and finite"));
        }
        if !(self.c_mnl > 0.0 && self.c_mnl <= 1.0) {
            return Err(Error::param("C_mnl", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(rename = "n_A")]
    pub n_a: f64,
    /// rad/s
    pub kappa_a: f64,
    /// Total axion occupancy of the cavity volume.
    #[serde(rename = "N_A")]
    pub n_total: f64,
}

impl ModelParams {
    /// Copies n_A and κ_a into a network parameter set.
    pub fn apply(&self, p: &NetworkParams) -> NetworkParams {
        NetworkParams {
            n_a: self.n_a,
            kappa_a: self.kappa_a,
            ..*p
        }
    }
}

pub fn model_params(phys: &HaloscopePhysical) -> Result<ModelParams> {
    phys.validate()?;
    let g = per_ev_to_per_joule(phys.g_agg.abs());
    let rho = gev_per_cm3_to_si(phys.rho_a);
    let v = liters_to_m3(phys.volume);
    let c3 = SPEED_OF_LIGHT.powi(3);
    let kappa_a = g * phys.b0 * (phys.c_mnl * HBAR * c3 / MU_0).sqrt();
    let n_a = g * rho * phys.b0 * v / (4.0 * phys.omega_a * phys.delta_a)
        * (phys.c_mnl * c3 / (HBAR * MU_0)).sqrt();
    let n_total = v * rho / (HBAR * phys.omega_a);
    let out = ModelParams {
        n_a,
        kappa_a,
        n_total,
    };
    if ![n_a, kappa_a, n_total].iter().all(|x| x.is_finite() && *x > 0.0) {
        return Err(Error::Degenerate(format!(
            "model parameters overflowed or vanished: {out:?}"
        )));
    }
    Ok(out)
}

/// On-resonance signal power at the cavity output from the generator model, W.
pub fn signal_power(p: &NetworkParams, delta_a: f64, omega_a: f64) -> f64 {
    let s = p.kappa_m + p.kappa_l;
    4.0 * HBAR * omega_a * p.n_a * delta_a * p.kappa_a * p.kappa_m / (s * s)
}

/// Same power from the steady state of two coupled cavities holding
/// `n_total` axions, W.
pub fn signal_power_two_cavity(p: &NetworkParams, n_total: f64, omega_a: f64) -> f64 {
    let s = p.kappa_m + p.kappa_l;
    HBAR * omega_a * n_total * p.kappa_a * p.kappa_a * p.kappa_m / (s * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

/// How far an inequality a ≫ b is satisfied: `margin = a / b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCheck {
    pub name: String,
    pub condition: String,
    pub margin: f64,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalLimitReport {
    pub checks: Vec<RegimeCheck>,
}

impl ClassicalLimitReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }

    pub fn worst(&self) -> CheckStatus {
        self.checks
            .iter()
            .map(|c| c.status)
            .max_by_key(|s| *s as u8)
            .unwrap_or(CheckStatus::Pass)
    }
}

/// Margin below which a satisfied inequality is only flagged as a warning.
pub const WARN_MARGIN: f64 = 10.0;

fn grade(margin: f64) -> CheckStatus {
    if !(margin > 1.0) {
        CheckStatus::Fail
    } else if margin < WARN_MARGIN {
        CheckStatus::Warn
    } else {
        CheckStatus::Pass
    }
}

/// Checks n_A ≫ 1, Δ_a ≪ {κ_l, κ_m} (both as Hz) and n_A·κ_a ≪ κ_l.
pub fn validate_classical_limit(p: &NetworkParams, delta_a: f64) -> ClassicalLimitReport {
    let hz = |k: f64| k / (2.0 * std::f64::consts::PI);
    let mk = |name: &str, condition: &str, margin: f64| RegimeCheck {
        name: name.into(),
        condition: condition.into(),
        margin,
        status: grade(margin),
    };
    ClassicalLimitReport {
        checks: vec![
            mk("classical_signal", "n_A >> 1", p.n_a),
            mk(
                "narrowband",
                "delta_a << min(kappa_l, kappa_m)/2pi",
                hz(p.kappa_l.min(p.kappa_m)) / delta_a,
            ),
            mk("weak_coupling", "n_A kappa_a << kappa_l", p.kappa_l / (p.n_a * p.kappa_a)),
        ],
    }
}
