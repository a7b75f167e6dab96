//! Squeezed-state receiver (SSR) haloscope toolkit.
//!
//! The crate models a cavity read out through a pair of parametric amplifiers
//! (a squeezer on the way in, a phase-sensitive amplifier on the way out),
//! turns the resulting signal visibility into scan rates, synthesizes averaged
//! single-quadrature power spectra with a stepped "faxion" tone, and runs the
//! full grand-spectrum analysis chain over those spectra.
//!
//! Module map:
//!
//! * [`network`] – quadrature-basis input–output model, spectral densities, visibility.
//! * [`scan_rate`] – scan rates, enhancement landscapes, optimal couplings.
//! * [`axion`] – physical axion/haloscope parameters mapped onto the generator model.
//! * [`synth`] – Gamma-distributed averaged periodograms with an injected tone.
//! * [`pipeline`] – baseline removal, rescaling, combination and the grand spectrum.
//! * [`campaign`] – seeded Monte Carlo campaigns and their configuration.
//! * [`theory`] – visibility curves, enhancement grids and scan-rate ratios.
//! * [`io`], [`plot`] – run directories, CSV/JSON results and SVG plots.
//!
//! Everything data-parallel goes through [`exec::Execution`], which uses rayon
//! when the `parallel` feature is enabled and falls back to plain iteration
//! otherwise. Results never depend on the execution mode.

pub mod axion;
pub mod campaign;
pub mod constants;
pub mod error;
pub mod exec;
pub mod integrate;
pub mod io;
pub mod network;
pub mod optimize;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod scan_rate;
pub mod stats;
pub mod synth;
pub mod theory;

pub use error::{Error, ErrorKind, Result};
pub use exec::Execution;
pub use network::NetworkParams;
