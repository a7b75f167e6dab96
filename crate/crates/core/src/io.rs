//! Run directories and result files.
//!
//! A synthesized run directory holds `raw.f64` (little-endian doubles,
//! one spectrum after another) described by `raw.f64.json`, plus
//! `truth.json` and `config.json`. Pipeline outputs are CSV and JSON.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkParams;
use crate::pipeline::GrandSpectrum;
use crate::synth::{noise_profile, RawSpectrumSet, SynthConfig, Truth};

pub const RAW_FILE: &str = "raw.f64";
pub const RAW_HEADER: &str = "raw.f64.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const CONFIG_FILE: &str = "config.json";
pub const GRAND_FILE: &str = "grand.csv";
pub const PROCESSED_FILE: &str = "processed.csv";
pub const STAGE_STATS_FILE: &str = "stage_stats.json";

/// Layout of `raw.f64`: `bins` values per spectrum, `spectra` columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHeader {
    pub format: String,
    pub bins: usize,
    pub spectra: usize,
}

impl RawHeader {
    const FORMAT: &'static str = "f64le-column-major";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkParams,
    pub synth: SynthConfig,
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

/// Writes numeric columns under the given header.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    if header.len() != columns.len() {
        return Err(Error::InvalidSignal("header and column counts differ".into()));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::InvalidSignal("columns have different lengths".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    let mut rec = Vec::with_capacity(columns.len());
    for i in 0..rows {
        rec.clear();
        rec.extend(columns.iter().map(|c| c[i].to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a numeric CSV; returns the header and the columns.
pub fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            c.push(field.trim().parse::<f64>().map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("`{field}`: {e}"),
            })?);
        }
    }
    Ok((header, cols))
}

/// Writes a synthesized run into `dir`.
pub fn write_run(dir: &Path, raw: &RawSpectrumSet) -> Result<()> {
    create_dir(dir)?;
    let header = RawHeader {
        format: RawHeader::FORMAT.into(),
        bins: raw.n_bins(),
        spectra: raw.spectra.len(),
    };
    let path = dir.join(RAW_FILE);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(f);
    for s in &raw.spectra {
        for v in s {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join(RAW_HEADER), &header)?;
    write_json(&dir.join(TRUTH_FILE), &raw.truth)?;
    write_json(
        &dir.join(CONFIG_FILE),
        &RunConfig {
            network: raw.network,
            synth: raw.config,
        },
    )
}

/// Reads a run directory written by [`write_run`].
pub fn read_run(dir: &Path) -> Result<RawSpectrumSet> {
    let header: RawHeader = read_json(&dir.join(RAW_HEADER))?;
    let path = dir.join(RAW_FILE);
    if header.format != RawHeader::FORMAT {
        return Err(Error::Format {
            path,
            reason: format!("unsupported format `{}`", header.format),
        });
    }
    let cfg: RunConfig = read_json(&dir.join(CONFIG_FILE))?;
    let truth: Truth = read_json(&dir.join(TRUTH_FILE))?;
    if cfg.synth.n_bins() != header.bins {
        return Err(Error::Format {
            path,
            reason: format!(
                "{} bins per spectrum but the configuration implies {}",
                header.bins,
                cfg.synth.n_bins()
            ),
        });
    }
    let mut bytes = Vec::new();
    File::open(&path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(&path, e))?;
    if bytes.len() != 8 * header.bins * header.spectra {
        return Err(Error::Format {
            path,
            reason: format!(
                "{} bytes, expected {}",
                bytes.len(),
                8 * header.bins * header.spectra
            ),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight")))
        .collect();
    let spectra = values.chunks(header.bins.max(1)).map(<[f64]>::to_vec).collect();
    Ok(RawSpectrumSet {
        spectra,
        noise_mean: noise_profile(&cfg.network, &cfg.synth)?,
        truth,
        config: cfg.synth,
        network: cfg.network,
    })
}

pub fn write_grand(path: &Path, g: &GrandSpectrum) -> Result<()> {
    let counts: Vec<f64> = g.counts.iter().map(|&c| c as f64).collect();
    write_columns(
        path,
        &["frequency_hz", "excess_sigma", "n_contrib"],
        &[&g.freqs_hz, &g.values, &counts],
    )
}

/// Processed spectra as columns `spectrum_<i>` against two-sided IF
/// frequency; masked bins are `NaN`.
pub fn write_processed(path: &Path, freqs_hz: &[f64], processed: &[Vec<f64>]) -> Result<()> {
    let names: Vec<String> = (0..processed.len()).map(|i| format!("spectrum_{i}")).collect();
    let mut header = vec!["frequency_hz"];
    header.extend(names.iter().map(String::as_str));
    let mut cols: Vec<&[f64]> = vec![freqs_hz];
    cols.extend(processed.iter().map(Vec::as_slice));
    write_columns(path, &header, &cols)
}

/// Scoped subdirectory `rep_<index>` of `root`.
pub fn rep_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("rep_{index:04}"))
}
