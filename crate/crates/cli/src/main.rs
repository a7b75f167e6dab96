use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ssr_core::axion::{model_params, signal_power, validate_classical_limit};
use ssr_core::campaign::{check_campaign, run_campaign, write_campaign, ExperimentConfig};
use ssr_core::constants::angular;
use ssr_core::io;
use ssr_core::network::relative_visibility;
use ssr_core::pipeline::{measure_faxion, two_sided_freqs, Pipeline, VisibilityProfile};
use ssr_core::plot::{histogram, line_plot, Series};
use ssr_core::scan_rate::{enhancement_grid, log_axis};
use ssr_core::synth::synthesize_run;
use ssr_core::theory::theory_report;
use ssr_core::{Error, ErrorKind, Execution, NetworkParams};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "ssr", version, about = "Squeezed-state receiver haloscope simulator")]
struct Cli {
    /// JSON configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (stdout for single tables when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write every intermediate stage.
    #[arg(long, global = true)]
    dump_stages: bool,
    /// Compare results against the configured thresholds; exit 4 on failure.
    #[arg(long, global = true)]
    check: bool,
    /// Run everything on the current thread.
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Receiver {
    Squeezed,
    Unsqueezed,
}

#[derive(Subcommand)]
enum Command {
    /// Relative visibility of both receivers against detuning.
    Visibility,
    /// Scan-rate enhancement over the (G_s, κ_m/κ_l) grid.
    ScanrateGrid {
        #[arg(long, default_value_t = 0.69)]
        eta: f64,
    },
    /// Generator parameters for the configured axion and cavity.
    AxionParams,
    /// Synthesize one run of raw spectra into a run directory.
    Synth {
        #[arg(long, value_enum, default_value_t = Receiver::Squeezed)]
        receiver: Receiver,
        #[arg(long, default_value_t = 0)]
        run: u32,
    },
    /// Process a run directory into the grand spectrum.
    Pipeline {
        /// Directory written by `synth`.
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Squeezed vs unsqueezed Monte Carlo campaign.
    Campaign,
    /// Theory tables: visibility curves, grids, couplings, enhancements.
    TheoryReport,
}

enum Failure {
    Error(Error),
    Check(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type Outcome = Result<(), Failure>;

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    if cli.serial {
        cfg.execution = Execution::Serial;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn emit_json(out: Option<&Path>, name: &str, value: &serde_json::Value) -> Result<(), Error> {
    match out {
        Some(dir) => {
            io::create_dir(dir)?;
            io::write_json(&dir.join(name), value)
        }
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn emit_columns(out: Option<&Path>, name: &str, header: &[&str], cols: &[&[f64]]) -> Result<(), Error> {
    match out {
        Some(dir) => {
            io::create_dir(dir)?;
            io::write_columns(&dir.join(name), header, cols)
        }
        None => {
            println!("{}", header.join(","));
            let rows = cols.first().map_or(0, |c| c.len());
            for i in 0..rows {
                let row: Vec<String> = cols.iter().map(|c| c[i].to_string()).collect();
                println!("{}", row.join(","));
            }
            Ok(())
        }
    }
}

fn visibility(cli: &Cli, cfg: &ExperimentConfig) -> Outcome {
    let t = &cfg.theory;
    let n = t.curve_points.max(2);
    let freqs: Vec<f64> = (0..n)
        .map(|i| -t.curve_span_hz + 2.0 * t.curve_span_hz * i as f64 / (n - 1) as f64)
        .collect();
    let curve = |p: &NetworkParams| -> Result<Vec<f64>, Error> {
        freqs.iter().map(|&f| relative_visibility(p, angular(f))).collect()
    };
    let s = curve(&cfg.squeezed)?;
    let u = curve(&cfg.unsqueezed)?;
    let header = ["frequency_hz", "squeezed", "unsqueezed"];
    emit_columns(cli.out.as_deref(), "visibility.csv", &header, &[&freqs, &s, &u])?;
    if let Some(dir) = &cli.out {
        let svg = line_plot(
            "relative visibility",
            "detuning (Hz)",
            "alpha / alpha_max",
            &[
                Series { name: "squeezed", x: &freqs, y: &s },
                Series { name: "unsqueezed", x: &freqs, y: &u },
            ],
        );
        io::write_text(&dir.join("visibility.svg"), &svg)?;
    }
    Ok(())
}

fn scanrate_grid(cli: &Cli, cfg: &ExperimentConfig, eta: f64) -> Outcome {
    let t = &cfg.theory;
    let base = NetworkParams::default();
    let grid = enhancement_grid(
        eta,
        &log_axis(1.0, t.gs_max, t.grid_points),
        &log_axis(1.0, t.coupling_max, t.grid_points),
        &base,
        &cfg.scan,
        cfg.execution,
    )?;
    for f in &grid.failures {
        log::warn!(
            "cell G_s={} ratio={}: {}",
            grid.gs_axis[f.gs_index],
            grid.coupling_axis[f.coupling_index],
            f.reason
        );
    }
    match &cli.out {
        Some(dir) => {
            io::create_dir(dir)?;
            io::write_text(&dir.join(format!("grid_eta_{eta}.csv")), &grid.to_csv())?;
        }
        None => print!("{}", grid.to_csv()),
    }
    Ok(())
}

fn axion_params(cli: &Cli, cfg: &ExperimentConfig) -> Outcome {
    let m = model_params(&cfg.axion)?;
    let p = m.apply(&cfg.squeezed);
    let report = validate_classical_limit(&p, cfg.axion.delta_a);
    for c in report.checks.iter().filter(|c| c.status != ssr_core::axion::CheckStatus::Pass) {
        log::warn!("{}: {} has margin {:.3}", c.name, c.condition, c.margin);
    }
    let value = json!({
        "model": m,
        "kappa_a_over_2pi_hz": m.kappa_a / (2.0 * std::f64::consts::PI),
        "signal_power_w": signal_power(&p, cfg.axion.delta_a, cfg.axion.omega_a),
        "classical_limit": report,
    });
    emit_json(cli.out.as_deref(), "axion_params.json", &value)?;
    Ok(())
}

fn synth(cli: &Cli, cfg: &ExperimentConfig, receiver: Receiver, run: u32) -> Outcome {
    let p = match receiver {
        Receiver::Squeezed => &cfg.squeezed,
        Receiver::Unsqueezed => &cfg.unsqueezed,
    };
    let synth = ssr_core::synth::SynthConfig {
        seed: cfg.seed,
        ..cfg.synth
    };
    let raw = synthesize_run(p, &synth, run, cfg.execution)?;
    let dir = cli
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("synth needs --out".into()))?;
    io::write_run(dir, &raw)?;
    if cli.dump_stages {
        let idx: Vec<f64> = (0..raw.n_bins()).map(|k| synth.bin_center(k)).collect();
        let names: Vec<String> = (0..raw.spectra.len()).map(|i| format!("spectrum_{i}")).collect();
        let mut header = vec!["frequency_hz"];
        header.extend(names.iter().map(String::as_str));
        let mut cols: Vec<&[f64]> = vec![&idx];
        cols.extend(raw.spectra.iter().map(Vec::as_slice));
        io::write_columns(&dir.join("raw.csv"), &header, &cols)?;
    }
    log::info!("wrote {} spectra to {}", raw.spectra.len(), dir.display());
    Ok(())
}

fn pipeline(cli: &Cli, cfg: &ExperimentConfig, input: &Path) -> Outcome {
    let raw = io::read_run(input)?;
    let synth = raw.config;
    let pipe = Pipeline::new(cfg.pipeline.clone(), raw.n_bins(), cfg.execution)?;
    let profile = VisibilityProfile::from_model(&raw.network, &synth)?;
    let fx = raw.truth.fictitious_hz(&synth);
    let out = pipe.run(&raw, &profile, Some(fx), true)?;
    let power = measure_faxion(&out.grand, &raw.truth, &synth)?;
    let dir = cli.out.as_deref().unwrap_or(input);
    io::create_dir(dir)?;
    io::write_grand(&dir.join(io::GRAND_FILE), &out.grand)?;
    io::write_json(&dir.join(io::STAGE_STATS_FILE), &out.stats)?;
    let stages = out.stages.as_ref().expect("stages requested");
    let shown = if cli.dump_stages { stages.processed.len() } else { 1 };
    io::write_processed(&dir.join(io::PROCESSED_FILE), &stages.freqs_hz, &stages.processed[..shown])?;
    if cli.dump_stages {
        let keep: Vec<f64> = stages.mask.keep.iter().map(|&k| f64::from(u8::from(k))).collect();
        io::write_columns(
            &dir.join("stage_mean.csv"),
            &["frequency_hz", "mean", "baseline", "keep", "visibility"],
            &[&stages.freqs_hz, &stages.mean, &stages.baseline, &keep, &stages.visibility],
        )?;
        for (name, s) in [("stage_combined.csv", &stages.combined), ("stage_rebinned.csv", &out.rebinned)] {
            let f: Vec<f64> = (0..s.len()).map(|i| s.freq(i)).collect();
            let c: Vec<f64> = s.counts.iter().map(|&c| c as f64).collect();
            io::write_columns(
                &dir.join(name),
                &["frequency_hz", "value", "inv_var", "n_contrib"],
                &[&f, &s.values, &s.inv_var, &c],
            )?;
        }
        debug_assert_eq!(stages.freqs_hz, two_sided_freqs(raw.n_bins(), synth.bin_width));
    }
    let svg = line_plot(
        "grand spectrum",
        "fictitious frequency (Hz)",
        "excess (sigma_g)",
        &[Series { name: "grand", x: &out.grand.freqs_hz, y: &out.grand.values }],
    );
    io::write_text(&dir.join("grand.svg"), &svg)?;
    let summary = json!({ "faxion_hz": fx, "faxion_power_sigma": power, "stats": out.stats });
    println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    if cli.check && out.stats.retention < cfg.checks.min_retention {
        return Err(Failure::Check(vec![format!(
            "retention {} below {}",
            out.stats.retention, cfg.checks.min_retention
        )]));
    }
    Ok(())
}

fn campaign(cli: &Cli, cfg: &ExperimentConfig) -> Outcome {
    let (r, t) = run_campaign(cfg, cli.dump_stages)?;
    if let Some(dir) = &cfg.output_dir {
        write_campaign(dir, cfg, &r, &t)?;
        let lo = -4.0;
        let hi = r.mu_s.max(r.mu_u) + 5.0;
        let (x, hs) = histogram(&r.powers_squeezed, lo, hi, 40);
        let (_, hu) = histogram(&r.powers_unsqueezed, lo, hi, 40);
        let svg = line_plot(
            "faxion power distributions",
            "grand-spectrum power (sigma_g)",
            "repetitions",
            &[
                Series { name: "squeezed", x: &x, y: &hs },
                Series { name: "unsqueezed", x: &x, y: &hu },
            ],
        );
        io::write_text(&dir.join("powers.svg"), &svg)?;
    }
    let checks = check_campaign(cfg, &r);
    let summary = json!({
        "mu_s": r.mu_s, "mu_s_se": r.mu_s_se,
        "mu_u": r.mu_u, "mu_u_se": r.mu_u_se,
        "E_m": r.e_m, "E_m_se": r.e_m_se,
        "E_t": r.e_t, "E_t_protocol": r.e_t_protocol,
        "sigma_g": r.sigma_g,
        "failed_repetitions": r.failures.len(),
        "wall_seconds": t.wall_seconds,
        "checks": checks,
    });
    println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    if cli.check {
        let failed: Vec<String> = checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{}: {} (limit {})", c.name, c.value, c.limit))
            .collect();
        if !failed.is_empty() {
            return Err(Failure::Check(failed));
        }
    }
    Ok(())
}

fn theory(cli: &Cli, cfg: &ExperimentConfig) -> Outcome {
    let r = theory_report(&cfg.squeezed, &cfg.unsqueezed, &cfg.scan, &cfg.theory, cfg.execution)?;
    let summary = json!({
        "E_t": r.e_t,
        "E_c1": r.e_c1,
        "E_c2_vs_squeezed": r.e_c2_vs_squeezed,
        "E_c2_vs_unsqueezed": r.e_c2_vs_unsqueezed,
        "plateau_Gs25_ratio5": r.plateau,
        "optimal_coupling_squeezed": r.optimal_coupling_squeezed,
        "optimal_coupling_unsqueezed": r.optimal_coupling_unsqueezed,
        "high_gain": r.high_gain,
    });
    match &cli.out {
        Some(dir) => {
            io::create_dir(dir)?;
            io::write_json(&dir.join("theory.json"), &r)?;
            io::write_json(&dir.join("theory_summary.json"), &summary)?;
            let (header, cols) = r.curves.to_columns();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            io::write_columns(&dir.join("alpha_cases.csv"), &header, &cols)?;
            io::write_text(&dir.join("grid_eta_1.csv"), &r.grid_lossless.to_csv())?;
            io::write_text(&dir.join(format!("grid_eta_{}.csv", cfg.theory.eta)), &r.grid_lossy.to_csv())?;
            let series: Vec<Series> = r
                .curves
                .cases
                .iter()
                .map(|c| Series { name: &c.name, x: &r.curves.freqs_hz, y: &c.values })
                .collect();
            let svg = line_plot("relative visibility", "detuning (Hz)", "alpha / alpha_max", &series);
            io::write_text(&dir.join("alpha_cases.svg"), &svg)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
        }
        None => println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?),
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Outcome {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Visibility => visibility(cli, &cfg),
        Command::ScanrateGrid { eta } => scanrate_grid(cli, &cfg, *eta),
        Command::AxionParams => axion_params(cli, &cfg),
        Command::Synth { receiver, run } => synth(cli, &cfg, *receiver, *run),
        Command::Pipeline { run_dir } => pipeline(cli, &cfg, run_dir),
        Command::Campaign => campaign(cli, &cfg),
        Command::TheoryReport => theory(cli, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(failed)) => {
            for f in failed {
                eprintln!("check failed: {f}");
            }
            ExitCode::from(EXIT_CHECK)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Config | ErrorKind::Io => ExitCode::from(EXIT_CONFIG),
                ErrorKind::Numerical => ExitCode::from(EXIT_NUMERICAL),
            }
        }
    }
}
