//! Quadrature-basis input–output model of the squeezer → loss → cavity →
//! loss → amplifier chain.
//!
//! Ports are always ordered (measurement, loss, signal). All frequencies are
//! detunings from cavity resonance in rad/s.

use log::warn;
use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{angular, from_db, to_db};
use crate::error::{Error, Result};

pub const M: usize = 0;
pub const L: usize = 1;
pub const A: usize = 2;

pub type ComplexMatrix3 = Matrix3<Complex64>;

/// Ratio κ_a / min(κ_m, κ_l) above which the weak-coupling approximation is
/// considered violated.
pub const WEAK_COUPLING_LIMIT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkParams {
    /// Measurement-port coupling, rad/s.
    pub kappa_m: f64,
    /// Internal loss rate, rad/s.
    pub kappa_l: f64,
    /// Signal-port coupling, rad/s.
    pub kappa_a: f64,
    /// Cavity resonance, rad/s. Bookkeeping only.
    pub omega_c: f64,
    #[serde(rename = "n_T")]
    pub n_t: f64,
    #[serde(rename = "n_A")]
    pub n_a: f64,
    /// Squeezer single-quadrature power gain (linear).
    #[serde(rename = "G_s")]
    pub g_s: f64,
    /// Amplifier single-quadrature power gain (linear).
    #[serde(rename = "G_a")]
    pub g_a: f64,
    /// Single-sided transmission efficiency; η = λ².
    pub lambda_t: f64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        let kappa_l = angular(100e3);
        NetworkParams {
            kappa_m: kappa_l,
            kappa_l,
            kappa_a: angular(100.0),
            omega_c: angular(7.146e9),
            n_t: 0.0,
            n_a: 5.0,
            g_s: 1.0,
            g_a: from_db(25.0),
            lambda_t: 1.0,
        }
    }
}

impl NetworkParams {
    /// Overcoupled, squeezed receiver used in the measurements:
    /// κ_m = 10κ_l, G_s = 13 dB, η = 0.69.
    pub fn squeezed_preset() -> Self {
        let p = NetworkParams::default();
        NetworkParams {
            kappa_m: 10.0 * p.kappa_l,
            g_s: from_db(13.0),
            lambda_t: 0.69f64.sqrt(),
            ..p
        }
    }

    /// Near-critically coupled receiver with the squeezer off:
    /// κ_m = 1.5κ_l, G_s = 1, η = 0.69.
    pub fn unsqueezed_preset() -> Self {
        let p = NetworkParams::default();
        NetworkParams {
            kappa_m: 1.5 * p.kappa_l,
            g_s: 1.0,
            lambda_t: 0.69f64.sqrt(),
            ..p
        }
    }

    pub fn kappa_t(&self) -> f64 {
        self.kappa_m + self.kappa_l + self.kappa_a
    }

    pub fn eta(&self) -> f64 {
        self.lambda_t * self.lambda_t
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.lambda_t = eta.sqrt();
        self
    }

    pub fn with_coupling_ratio(mut self, ratio: f64) -> Self {
        self.kappa_m = ratio * self.kappa_l;
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn finite(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("{v} is not finite")))
            }
        }
        finite("kappa_m", self.kappa_m)?;
        finite("kappa_l", self.kappa_l)?;
        finite("kappa_a", self.kappa_a)?;
        finite("omega_c", self.omega_c)?;
        finite("n_T", self.n_t)?;
        finite("n_A", self.n_a)?;
        finite("G_s", self.g_s)?;
        finite("G_a", self.g_a)?;
        finite("lambda_t", self.lambda_t)?;
        if self.kappa_m <= 0.0 {
            return Err(Error::param("kappa_m", "must be > 0"));
        }
        if self.kappa_l <= 0.0 {
            return Err(Error::param("kappa_l", "must be > 0"));
        }
        if self.kappa_a < 0.0 {
            return Err(Error::param("kappa_a", "must be >= 0"));
        }
        if self.n_t < 0.0 {
            return Err(Error::param("n_T", "must be >= 0"));
        }
        if self.n_a < 0.0 {
            return Err(Error::param("n_A", "must be >= 0"));
        }
        if self.g_s < 1.0 {
            return Err(Error::param("G_s", "must be >= 1"));
        }
        if self.g_a < 1.0 {
            return Err(Error::param("G_a", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.lambda_t) {
            return Err(Error::param("lambda_t", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Human-readable warnings about leaving the approximation regime.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ratio = self.kappa_a / self.kappa_m.min(self.kappa_l);
        if ratio > WEAK_COUPLING_LIMIT {
            out.push(format!(
                "kappa_a/min(kappa_m, kappa_l) = {ratio:.3e} exceeds {WEAK_COUPLING_LIMIT:e}; \
                 weak-coupling closed forms are inaccurate"
            ));
        }
        out
    }

    /// Validates and logs any approximation-regime warnings.
    pub fn check(&self) -> Result<()> {
        self.validate()?;
        for w in self.warnings() {
            warn!("{w}");
        }
        Ok(())
    }
}

/// Real symmetric matrix of single-quadrature spectral densities (quanta/s/Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDensityMatrix(pub Matrix3<f64>);

impl SpectralDensityMatrix {
    /// Output density at the measurement port.
    pub fn mm(&self) -> f64 {
        self.0[(M, M)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageMatrices {
    pub squeeze: Matrix3<f64>,
    pub loss: Matrix3<f64>,
    pub amplify: Matrix3<f64>,
    pub added_noise: Matrix3<f64>,
}

fn check_omega(omega: f64) -> Result<()> {
    if omega.is_finite() {
        Ok(())
    } else {
        Err(Error::param("omega", format!("{omega} is not finite")))
    }
}

/// Cavity susceptibility χ_jk(ω) = [−√(κ_jκ_k) + (κ_T/2 + iω)δ_jk] / (κ_T/2 + iω).
pub fn susceptibility(p: &NetworkParams, omega: f64) -> Result<ComplexMatrix3> {
    check_omega(omega)?;
    let k = [p.kappa_m, p.kappa_l, p.kappa_a];
    let den = Complex64::new(p.kappa_t() / 2.0, omega);
    Ok(ComplexMatrix3::from_fn(|j, l| {
        let mut num = Complex64::new(-(k[j] * k[l]).sqrt(), 0.0);
        if j == l {
            num += den;
        }
        num / den
    }))
}

pub fn build_stage_matrices(p: &NetworkParams) -> StageMatrices {
    let mut added_noise = Matrix3::zeros();
    added_noise[(M, M)] = (p.n_t + 0.5) * (1.0 - p.lambda_t);
    StageMatrices {
        squeeze: Matrix3::from_diagonal(&[1.0 / p.g_s.sqrt(), 1.0, 1.0].into()),
        loss: Matrix3::from_diagonal(&[p.lambda_t.sqrt(), 1.0, 1.0].into()),
        amplify: Matrix3::from_diagonal(&[p.g_a.sqrt(), 1.0, 1.0].into()),
        added_noise,
    }
}

pub fn input_density(p: &NetworkParams) -> Matrix3<f64> {
    Matrix3::from_diagonal(&[p.n_t + 0.5, p.n_t + 0.5, p.n_a + 0.5].into())
}

/// Output spectral density matrix by explicit matrix products.
pub fn output_density(p: &NetworkParams, omega: f64) -> Result<SpectralDensityMatrix> {
    let chi = susceptibility(p, omega)?;
    let st = build_stage_matrices(p);
    let ls = st.loss * st.squeeze;
    let sigma_i = ls * input_density(p) * ls.transpose() + st.added_noise;
    let sigma_i_c = sigma_i.map(|x| Complex64::new(x, 0.0));
    let sigma_o = chi.conjugate() * sigma_i_c * chi.transpose();
    let loss_c = st.loss.map(|x| Complex64::new(x, 0.0));
    let inner = (loss_c * sigma_o * loss_c.transpose()).map(|z| z.re) + st.added_noise;
    Ok(SpectralDensityMatrix(st.amplify * inner * st.amplify.transpose()))
}

/// (m, m) output density in closed form, keeping κ_a inside κ_T.
pub fn output_density_mm_exact(p: &NetworkParams, omega: f64) -> f64 {
    let kt = p.kappa_t();
    let b = kt * kt / 4.0 + omega * omega;
    let d = kt / 2.0 - p.kappa_m;
    let beta = d * d + omega * omega;
    let lam = p.lambda_t;
    let nt = p.n_t + 0.5;
    let sq = 1.0 - lam + lam / p.g_s;
    p.g_a * (1.0 - lam) * nt
        + p.g_a * lam / b
            * ((p.n_a + 0.5) * p.kappa_a * p.kappa_m + nt * (p.kappa_l * p.kappa_m + sq * beta))
}

fn b_beta(p: &NetworkParams, omega: f64) -> (f64, f64) {
    let s = p.kappa_m + p.kappa_l;
    let d = p.kappa_m - p.kappa_l;
    (s * s / 4.0 + omega * omega, d * d / 4.0 + omega * omega)
}

/// (m, m) output density in the weak-coupling form (κ_a dropped from κ_T).
pub fn output_density_mm_weak(p: &NetworkParams, omega: f64) -> f64 {
    let (b, beta) = b_beta(p, omega);
    let lam = p.lambda_t;
    let nt = p.n_t + 0.5;
    nt * p.g_a * (1.0 - lam)
        + p.g_a * lam / b
            * ((p.n_a + 0.5) * p.kappa_a * p.kappa_m
                + nt * (p.kappa_l * p.kappa_m + (1.0 - lam + lam / p.g_s) * beta))
}

/// (m, m) output density for the lossless chain in the weak-coupling,
/// strong-signal form (n_A + ½ → n_A). λ is ignored.
pub fn output_density_mm_lossless(p: &NetworkParams, omega: f64) -> f64 {
    let (b, beta) = b_beta(p, omega);
    p.g_a / b
        * (p.n_a * p.kappa_a * p.kappa_m + (p.n_t + 0.5) * (p.kappa_l * p.kappa_m + beta / p.g_s))
}

fn require_signal(p: &NetworkParams) -> Result<()> {
    if p.n_a > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidSignal(format!("n_A = {} must be > 0", p.n_a)))
    }
}

/// Signal visibility α(ω) in the weak-coupling closed form including loss.
pub fn visibility(p: &NetworkParams, omega: f64) -> Result<f64> {
    require_signal(p)?;
    check_omega(omega)?;
    let (b, beta) = b_beta(p, omega);
    let lam = p.lambda_t;
    let den = b * (1.0 - lam) + lam * (p.kappa_l * p.kappa_m + (1.0 - lam + lam / p.g_s) * beta);
    Ok(lam * p.n_a * p.kappa_a * p.kappa_m / ((p.n_t + 0.5) * den))
}

/// Visibility from the exact density: the n_A-proportional term over the
/// n_A = 0 output density.
pub fn visibility_exact(p: &NetworkParams, omega: f64) -> Result<f64> {
    require_signal(p)?;
    check_omega(omega)?;
    let noise = output_density_mm_exact(&NetworkParams { n_a: 0.0, ..*p }, omega);
    let kt = p.kappa_t();
    let b = kt * kt / 4.0 + omega * omega;
    let signal = p.g_a * p.lambda_t / b * p.n_a * p.kappa_a * p.kappa_m;
    Ok(signal / noise)
}

/// α(0) at critical coupling κ_m = κ_l with the same λ, G_s and occupancies.
pub fn visibility_max(p: &NetworkParams) -> Result<f64> {
    visibility(
        &NetworkParams {
            kappa_m: p.kappa_l,
            ..*p
        },
        0.0,
    )
}

/// α(ω)/α_max.
pub fn relative_visibility(p: &NetworkParams, omega: f64) -> Result<f64> {
    Ok(visibility(p, omega)? / visibility_max(p)?)
}

/// Squeezing observed in the amplified quadrature far from resonance, dB:
/// 10·log10(η/G_s + 1 − η).
pub fn expected_squeezing(eta: f64, g_s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::param("eta", format!("{eta} outside [0, 1]")));
    }
    if !(g_s >= 1.0) || !g_s.is_finite() {
        return Err(Error::param("G_s", format!("{g_s} must be finite and >= 1")));
    }
    Ok(to_db(eta / g_s + 1.0 - eta))
}
