//! burstlab CLI: simulate or ingest a series, filter it, extract burst and
//! inter-burst durations, fit power laws, and emit reports.
//!
//! Exit codes: 0 success, 1 validation error (bad config, malformed input),
//! 2 runtime error (I/O and internal failures).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use burstlab::error::Error;
use burstlab::fbm::{simulate_fbm, simulate_fgn, FbmParams};
use burstlab::io;
use burstlab::passage::{duration_histogram, extract_bursts, DEFAULT_BINS_PER_DECADE};
use burstlab::pipeline::{
    emit_plot_script, emit_report, run_pipeline, PipelineConfig, Report,
};
use burstlab::point_process::{denoise_activity, generate_events, PoissonPipelineConfig};
use burstlab::sde::{simulate_sde, SdeParams};
use burstlab::series::UniformSeries;
use burstlab::spectral::{
    fit_duration_exponent_mle, fit_power_law, fit_two_regime_psd, hurst_from_beta,
    log_bin_spectrum, welch_psd, SpectrumEstimate,
};

#[derive(Parser)]
#[command(name = "burstlab", version, about = "Burst-duration analysis toolkit")]
struct Cli {
    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SdeArgs {
    #[arg(long, default_value_t = 2.5)]
    eta: f64,
    #[arg(long, default_value_t = 3.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    x_min: f64,
    #[arg(long, default_value_t = 1e3)]
    x_max: f64,
    #[arg(long, default_value_t = 0.1)]
    kappa: f64,
    /// Initial state; defaults to the geometric midpoint of the domain.
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long, default_value_t = 100.0)]
    duration: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt_out: f64,
}

impl SdeArgs {
    fn params(&self) -> SdeParams {
        SdeParams {
            eta: self.eta,
            lambda: self.lambda,
            x_min: self.x_min,
            x_max: self.x_max,
            kappa: self.kappa,
            x0: self.x0.unwrap_or((self.x_min * self.x_max).sqrt()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the nonlinear SDE and write a series CSV.
    SimulateSde {
        #[command(flatten)]
        sde: SdeArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output series CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate fractional Brownian motion (or its increments) to CSV.
    SimulateFbm {
        #[arg(long, default_value_t = 0.7)]
        hurst: f64,
        #[arg(long, default_value_t = 1 << 20)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Emit the stationary increments (fGn) instead of the motion.
        #[arg(long)]
        increments: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a quasi-Poisson event stream from a rate.
    SimulateEvents {
        /// Constant rate in events per second...
        #[arg(long, conflicts_with = "rate_csv")]
        rate: Option<f64>,
        /// ...or a series CSV with the rate per sample.
        #[arg(long)]
        rate_csv: Option<PathBuf>,
        /// Duration in seconds (with --rate).
        #[arg(long, default_value_t = 86_400.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover activity from an event stream (bin, Anscombe, moving
    /// average, unbiased inverse).
    Denoise {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        bin_seconds: f64,
        #[arg(long, default_value_t = 10)]
        ma_window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract burst/inter-burst durations at thresholds.
    Bursts {
        #[arg(long)]
        series: PathBuf,
        /// Thresholds in units of the (normalized) series.
        #[arg(long, value_delimiter = ',', required = true)]
        thresholds: Vec<f64>,
        /// Normalize the series to unit standard deviation first.
        #[arg(long)]
        normalize: bool,
        #[arg(long, default_value_t = DEFAULT_BINS_PER_DECADE)]
        bins_per_decade: usize,
        /// Output directory for durations CSVs and histogram JSONs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Welch power spectral density of a series.
    Psd {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, default_value_t = 1 << 14)]
        segment_len: usize,
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
        /// Log-bin the spectrum with this many bins per decade (0 = raw).
        #[arg(long, default_value_t = 0)]
        log_bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit power laws to a spectrum CSV or a durations CSV.
    Fit {
        /// Spectrum CSV (f,power) for PSD fits.
        #[arg(long, conflicts_with = "durations")]
        spectrum: Option<PathBuf>,
        /// Durations CSV (kind,start,end,duration) for the exponent MLE.
        #[arg(long)]
        durations: Option<PathBuf>,
        /// Fit a two-regime broken power law (spectrum mode).
        #[arg(long)]
        two_regime: bool,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        /// Write the fit JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full configured pipeline and emit the report artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a report JSON and regenerate its plot script.
    Report {
        #[arg(long)]
        report: PathBuf,
        /// Directory for the regenerated plot script (defaults to the
        /// report's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Csv { .. } | Error::Json(_) | Error::NonFiniteState { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Best effort; a pre-initialized global pool only happens if a
        // library consumer set one up first.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::SimulateSde { sde, seed, out } => {
            let series = simulate_sde(&sde.params(), sde.duration, sde.dt_out, seed)?;
            io::write_series(&out, &series)?;
            eprintln!("wrote {} samples to {}", series.len(), out.display());
            Ok(())
        }
        Command::SimulateFbm {
            hurst,
            n,
            dt,
            sigma,
            increments,
            seed,
            out,
        } => {
            let params = FbmParams::new(hurst, n, dt, sigma)?;
            let sample = if increments {
                simulate_fgn(&params, seed)?
            } else {
                simulate_fbm(&params, seed)?
            };
            io::write_series(&out, &sample.series)?;
            eprintln!(
                "wrote {} samples to {} (method {:?})",
                sample.series.len(),
                out.display(),
                sample.method
            );
            Ok(())
        }
        Command::SimulateEvents {
            rate,
            rate_csv,
            duration,
            seed,
            out,
        } => {
            let rate_series = match (rate, rate_csv) {
                (Some(r), None) => {
                    let n = (duration / 60.0).ceil().max(1.0) as usize;
                    UniformSeries::new(0.0, 60.0, vec![r; n])?
                }
                (None, Some(path)) => io::read_series(path)?,
                _ => {
                    return Err(Error::Config(vec![
                        "exactly one of --rate or --rate-csv is required".into(),
                    ]))
                }
            };
            let events = generate_events(&rate_series, seed)?;
            io::write_events(&out, &events)?;
            eprintln!("wrote {} events to {}", events.len(), out.display());
            Ok(())
        }
        Command::Denoise {
            events,
            bin_seconds,
            ma_window,
            out,
        } => {
            let stream = io::read_events(&events)?;
            let cfg = PoissonPipelineConfig {
                bin_seconds,
                ma_window,
            };
            let result = denoise_activity(&stream, &cfg)?;
            io::write_series(&out, &result.activity)?;
            eprintln!(
                "wrote {} bins to {} ({} clamped)",
                result.activity.len(),
                out.display(),
                result.clamped
            );
            Ok(())
        }
        Command::Bursts {
            series,
            thresholds,
            normalize,
            bins_per_decade,
            out,
        } => {
            let raw = io::read_series(&series)?;
            let analyzed = if normalize {
                raw.normalize_unit_std()?.0
            } else {
                raw
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.display().to_string(),
                source: e,
            })?;
            for h in thresholds {
                let set = extract_bursts(&analyzed, h);
                let tag = format!("{h}").replace('.', "p").replace('-', "m");
                let path = out.join(format!("durations_h{tag}.csv"));
                let mut body = String::from("kind,start,end,duration\n");
                for (kind, list) in [("burst", &set.bursts), ("interburst", &set.interbursts)] {
                    for iv in list {
                        body.push_str(&format!(
                            "{kind},{},{},{}\n",
                            iv.start, iv.end, iv.duration
                        ));
                    }
                }
                std::fs::write(&path, body).map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                for (kind, durations) in [
                    ("burst", set.burst_durations()),
                    ("interburst", set.interburst_durations()),
                ] {
                    if durations.is_empty() {
                        continue;
                    }
                    let hist = duration_histogram(&durations, bins_per_decade)?;
                    let hist_path = out.join(format!("histogram_{kind}_h{tag}.json"));
                    std::fs::write(&hist_path, serde_json::to_string_pretty(&hist)?).map_err(
                        |e| Error::Io {
                            path: hist_path.display().to_string(),
                            source: e,
                        },
                    )?;
                }
                eprintln!(
                    "h={h}: {} bursts, {} inter-bursts, {} censored edges",
                    set.bursts.len(),
                    set.interbursts.len(),
                    set.edge_censored
                );
            }
            Ok(())
        }
        Command::Psd {
            series,
            segment_len,
            overlap,
            log_bins,
            out,
        } => {
            let s = io::read_series(&series)?;
            let mut spectrum = welch_psd(&s, segment_len, overlap)?;
            if log_bins > 0 {
                spectrum = log_bin_spectrum(&spectrum, log_bins);
            }
            write_spectrum(&out, &spectrum)?;
            eprintln!(
                "wrote {} frequencies to {} ({} segments)",
                spectrum.frequencies.len(),
                out.display(),
                spectrum.segments_used
            );
            Ok(())
        }
        Command::Fit {
            spectrum,
            durations,
            two_regime,
            lo,
            hi,
            out,
        } => {
            let value = match (spectrum, durations) {
                (Some(path), None) => fit_spectrum_file(&path, two_regime, lo, hi)?,
                (None, Some(path)) => fit_durations_file(&path, lo, hi)?,
                _ => {
                    return Err(Error::Config(vec![
                        "exactly one of --spectrum or --durations is required".into(),
                    ]))
                }
            };
            let body = serde_json::to_string_pretty(&value)?;
            match out {
                Some(path) => std::fs::write(&path, body).map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?,
                None => println!("{body}"),
            }
            Ok(())
        }
        Command::Run { config, seed, out } => {
            let mut cfg = PipelineConfig::from_file(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
                cfg.seed_generated = false;
                cfg.raw.insert("seed".into(), seed.to_string());
            }
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let report = run_pipeline(&cfg)?;
            let written = emit_report(&report, &cfg.out_dir)?;
            let script = emit_plot_script(&report, &cfg.out_dir)?;
            eprintln!(
                "verdict: exponent {:.4} +- {:.4}; {} (d_markov {:.2} sigma, d_fbm {:.2} sigma)",
                report.verdict.duration_exponent,
                report.verdict.duration_stderr,
                report.verdict.classification,
                report.verdict.distance_markov_sigma,
                report.verdict.distance_fbm_sigma
            );
            eprintln!(
                "wrote {} artifacts and {} to {}",
                written.len(),
                script.display(),
                cfg.out_dir.display()
            );
            Ok(())
        }
        Command::Report { report, out } => {
            let text = std::fs::read_to_string(&report).map_err(|e| Error::Io {
                path: report.display().to_string(),
                source: e,
            })?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            Report::validate_json(&value)?;
            let parsed = Report::from_json(&text)?;
            let dir = out
                .or_else(|| report.parent().map(|p| p.to_path_buf()))
                .unwrap_or_else(|| PathBuf::from("."));
            let script = emit_plot_script(&parsed, &dir)?;
            println!(
                "schema {} ok; {} thresholds; verdict {} (exponent {:.4})",
                parsed.schema,
                parsed.thresholds.len(),
                parsed.verdict.classification,
                parsed.verdict.duration_exponent
            );
            println!("plot script: {}", script.display());
            Ok(())
        }
    }
}

fn write_spectrum(path: &PathBuf, spectrum: &SpectrumEstimate) -> Result<(), Error> {
    let mut body = String::from("f,power\n");
    for (f, p) in spectrum.frequencies.iter().zip(&spectrum.power) {
        body.push_str(&format!("{f},{p}\n"));
    }
    std::fs::write(path, body).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn read_spectrum(path: &PathBuf) -> Result<SpectrumEstimate, Error> {
    let series_like = io::read_two_column(path, &["f", "power"])?;
    Ok(SpectrumEstimate {
        frequencies: series_like.0,
        power: series_like.1,
        segments_used: 0,
        log_binned: false,
    })
}

fn fit_spectrum_file(
    path: &PathBuf,
    two_regime: bool,
    lo: Option<f64>,
    hi: Option<f64>,
) -> Result<serde_json::Value, Error> {
    let spectrum = read_spectrum(path)?;
    let f_min = spectrum.frequencies.first().copied().unwrap_or(1e-9);
    let f_max = spectrum.frequencies.last().copied().unwrap_or(1.0);
    let range = (lo.unwrap_or(f_min), hi.unwrap_or(f_max));
    if two_regime {
        let grid: Vec<f64> = spectrum
            .frequencies
            .iter()
            .copied()
            .filter(|f| *f > range.0 && *f < range.1)
            .collect();
        let fit = fit_two_regime_psd(&spectrum, &grid)?;
        let (h, in_range) = hurst_from_beta(fit.low_f.exponent);
        Ok(serde_json::json!({
            "two_regime": fit,
            "hurst_from_beta1": h,
            "hurst_in_range": in_range,
        }))
    } else {
        let fit = fit_power_law(&spectrum.frequencies, &spectrum.power, range)?;
        let (h, in_range) = hurst_from_beta(fit.exponent);
        Ok(serde_json::json!({
            "power_law": fit,
            "hurst_from_beta": h,
            "hurst_in_range": in_range,
        }))
    }
}

fn fit_durations_file(
    path: &PathBuf,
    lo: Option<f64>,
    hi: Option<f64>,
) -> Result<serde_json::Value, Error> {
    let durations = io::read_durations_csv(path)?;
    if durations.is_empty() {
        return Err(Error::EmptyInput("durations file"));
    }
    let max = durations.iter().cloned().fold(f64::MIN, f64::max);
    let min = durations.iter().cloned().fold(f64::MAX, f64::min);
    let range = (lo.unwrap_or(min), hi.unwrap_or(max));
    let mle = fit_duration_exponent_mle(&durations, range.0, range.1)?;
    let hist = duration_histogram(&durations, DEFAULT_BINS_PER_DECADE)?;
    let slope = burstlab::spectral::fit_histogram_slope(&hist, range).ok();
    Ok(serde_json::json!({
        "mle": mle,
        "histogram_slope": slope,
        "n_durations": durations.len(),
    }))
}
