//! Physical constants (CODATA 2018) and unit conversions used at the
//! boundaries of the crate. Everything internal is SI.

use std::f64::consts::PI;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Vacuum magnetic permeability, N/A².
pub const MU_0: f64 = 1.256_637_062_12e-6;
/// Elementary charge, C (also J per eV).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

const JOULE_PER_GEV: f64 = ELEMENTARY_CHARGE * 1e9;
const M3_PER_CM3: f64 = 1e-6;
const M3_PER_LITER: f64 = 1e-3;

pub fn gev_per_cm3_to_si(rho: f64) -> f64 {
    rho * JOULE_PER_GEV / M3_PER_CM3
}

pub fn si_to_gev_per_cm3(rho: f64) -> f64 {
    rho * M3_PER_CM3 / JOULE_PER_GEV
}

/// eV⁻¹ → J⁻¹.
pub fn per_ev_to_per_joule(g: f64) -> f64 {
    g / ELEMENTARY_CHARGE
}

pub fn per_joule_to_per_ev(g: f64) -> f64 {
    g * ELEMENTARY_CHARGE
}

pub fn liters_to_m3(v: f64) -> f64 {
    v * M3_PER_LITER
}

pub fn m3_to_liters(v: f64) -> f64 {
    v / M3_PER_LITER
}

/// Hz → rad/s.
pub fn angular(f_hz: f64) -> f64 {
    2.0 * PI * f_hz
}

/// rad/s → Hz.
pub fn hertz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// dB → linear power ratio.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
