//! Configuration-driven orchestration: simulate or ingest, filter, extract
//! bursts, fit, and report. Reproduces the paper-figure workflows at desk
//! scale and emits machine-readable reports, artifact CSVs and a gnuplot
//! script.
//!
//! Configs are flat `key = value` text files (diffable runs); all
//! randomness flows from explicit seeds recorded in the report provenance.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fbm::{simulate_fbm, FbmParams};
use crate::io;
use crate::passage::{
    duration_histogram, extract_bursts, pool_durations, BurstSet, DurationKind, LogHistogram,
    PooledDurations, DEFAULT_BINS_PER_DECADE,
};
use crate::point_process::{
    anscombe_forward, anscombe_inverse_unbiased, bin_counts, generate_events,
    PoissonPipelineConfig,
};
use crate::rng::child_rng;
use crate::sde::{generate_model_returns, simulate_sde, ReturnModelParams, SdeParams};
use crate::series::{EventStream, UniformSeries};
use crate::spectral::{
    fit_duration_exponent_mle, fit_histogram_slope, fit_spectrum, fit_two_regime_psd,
    hurst_from_beta, log_bin_spectrum, welch_psd, PowerLawFit, SpectrumEstimate, TwoRegimeFit,
};

use rand::Rng;

pub const REPORT_SCHEMA: &str = "burstlab-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Sde,
    Fbm,
    Events,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsvKind {
    Series,
    Ticks,
    Events,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    /// bin counts -> Anscombe -> moving average -> unbiased inverse.
    Anscombe,
    /// Rolling standard deviation of returns (volatility proxy).
    RollingStd,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Trading-activity workflow: denoised activity, normalized, thresholds
    /// {0.3, 0.4, 0.67, 1, 1.5, 2.5}.
    Activity,
    /// Filtered-return workflow: rolling std over 10 samples, normalized,
    /// thresholds {0.3, 0.4, 0.67, 1, 1.5, 2}.
    Returns,
    /// Daily pooled workflow: thresholds {0.3, 0.4, 0.67, 1.5, 2.5, 3}.
    Daily,
    Custom,
}

pub const ACTIVITY_THRESHOLDS: [f64; 6] = [0.3, 0.4, 0.67, 1.0, 1.5, 2.5];
pub const RETURNS_THRESHOLDS: [f64; 6] = [0.3, 0.4, 0.67, 1.0, 1.5, 2.0];
pub const DAILY_THRESHOLDS: [f64; 6] = [0.3, 0.4, 0.67, 1.5, 2.5, 3.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Raw key/value snapshot, kept verbatim for provenance.
    pub raw: BTreeMap<String, String>,

    pub source: SourceKind,
    pub preset: Preset,
    pub filter: FilterKind,
    pub normalize: bool,
    pub thresholds: Vec<f64>,

    // SDE source parameters.
    pub sde: SdeParams,
    pub duration: f64,
    pub dt_out: f64,
    /// Activity route: the SDE state is clamped into
    /// [rate_counts_lo, rate_counts_hi] counts per bin before driving the
    /// quasi-Poisson stream.
    pub rate_counts_lo: f64,
    pub rate_counts_hi: f64,

    // Returns route.
    pub return_model: ReturnModelParams,
    pub rolling_window: usize,

    // fBm source parameters.
    pub fbm: FbmParams,

    /// Number of independent realizations pooled for simulated sources
    /// (sde / fbm); each gets its own derived seed.
    pub ensemble: usize,

    // Anscombe route.
    pub poisson: PoissonPipelineConfig,

    // CSV / events ingestion.
    pub csv_path: Option<PathBuf>,
    pub csv_paths: Vec<PathBuf>,
    pub csv_kind: CsvKind,
    pub splice_gaps: bool,
    pub delta_steps: usize,

    // Spectral options.
    pub psd_segment_len: usize,
    pub psd_overlap: f64,
    pub psd_bins_per_decade: usize,
    pub psd_fit_lo: Option<f64>,
    pub psd_fit_hi: Option<f64>,

    // Duration fitting.
    pub bins_per_decade: usize,
    pub fit_lo: Option<f64>,
    pub fit_hi: Option<f64>,

    pub seed: u64,
    /// Whether the seed was generated (absent from the config) rather than
    /// given explicitly; recorded in provenance.
    pub seed_generated: bool,
    pub out_dir: PathBuf,
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            raw: BTreeMap::new(),
            source: SourceKind::Sde,
            preset: Preset::Custom,
            filter: FilterKind::None,
            normalize: true,
            thresholds: vec![0.4, 1.0],
            sde: SdeParams::standard(2.5, 3.0),
            duration: 100.0,
            dt_out: 1e-4,
            rate_counts_lo: 1.0,
            rate_counts_hi: 100.0,
            return_model: ReturnModelParams {
                a0: 10.0,
                b0: 1.0,
                delta: 1e-4,
            },
            rolling_window: 10,
            fbm: FbmParams {
                hurst: 0.7,
                n: 1 << 20,
                dt: 1.0,
                sigma: 1.0,
            },
            ensemble: 1,
            poisson: PoissonPipelineConfig::default(),
            csv_path: None,
            csv_paths: Vec::new(),
            csv_kind: CsvKind::Series,
            splice_gaps: false,
            delta_steps: 1,
            psd_segment_len: 1 << 14,
            psd_overlap: 0.5,
            psd_bins_per_decade: 10,
            psd_fit_lo: None,
            psd_fit_hi: None,
            bins_per_decade: DEFAULT_BINS_PER_DECADE,
            fit_lo: None,
            fit_hi: None,
            seed: 0,
            seed_generated: false,
            out_dir: PathBuf::from("burstlab-out"),
            threads: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_str(&text)
    }

    /// Parse a flat `key = value` config. Validation failures are collected
    /// and reported in one pass.
    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        let mut raw = BTreeMap::new();
        let mut problems = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    raw.insert(k.trim().to_string(), v.trim().to_string());
                }
                None => problems.push(format!("line {}: expected `key = value`", lineno + 1)),
            }
        }
        let mut cfg = PipelineConfig::default();

        let take = |key: &str| raw.get(key).cloned();
        macro_rules! parse_into {
            ($key:expr, $target:expr, $ty:ty) => {
                if let Some(v) = take($key) {
                    match v.parse::<$ty>() {
                        Ok(parsed) => $target = parsed,
                        Err(_) => problems.push(format!("{}: cannot parse {:?}", $key, v)),
                    }
                }
            };
        }

        if let Some(v) = take("source") {
            match v.as_str() {
                "sde" => cfg.source = SourceKind::Sde,
                "fbm" => cfg.source = SourceKind::Fbm,
                "events" => cfg.source = SourceKind::Events,
                "csv" => cfg.source = SourceKind::Csv,
                other => problems.push(format!("source: unknown kind {other:?}")),
            }
        }
        if let Some(v) = take("preset") {
            match v.as_str() {
                "activity" => cfg.preset = Preset::Activity,
                "returns" => cfg.preset = Preset::Returns,
                "daily" => cfg.preset = Preset::Daily,
                "custom" => cfg.preset = Preset::Custom,
                other => problems.push(format!("preset: unknown preset {other:?}")),
            }
        }
        if let Some(v) = take("filter") {
            match v.as_str() {
                "anscombe" => cfg.filter = FilterKind::Anscombe,
                "rolling-std" => cfg.filter = FilterKind::RollingStd,
                "none" => cfg.filter = FilterKind::None,
                other => problems.push(format!("filter: unknown filter {other:?}")),
            }
        }
        if let Some(v) = take("csv_kind") {
            match v.as_str() {
                "series" => cfg.csv_kind = CsvKind::Series,
                "ticks" => cfg.csv_kind = CsvKind::Ticks,
                "events" => cfg.csv_kind = CsvKind::Events,
                other => problems.push(format!("csv_kind: unknown kind {other:?}")),
            }
        }
        if let Some(v) = take("thresholds") {
            let mut parsed = Vec::new();
            for part in v.split(',') {
                match part.trim().parse::<f64>() {
                    Ok(h) => parsed.push(h),
                    Err(_) => problems.push(format!("thresholds: cannot parse {part:?}")),
                }
            }
            if !parsed.is_empty() {
                cfg.thresholds = parsed;
            }
        }

        parse_into!("normalize", cfg.normalize, bool);
        parse_into!("eta", cfg.sde.eta, f64);
        parse_into!("lambda", cfg.sde.lambda, f64);
        parse_into!("x_min", cfg.sde.x_min, f64);
        parse_into!("x_max", cfg.sde.x_max, f64);
        parse_into!("kappa", cfg.sde.kappa, f64);
        parse_into!("x0", cfg.sde.x0, f64);
        parse_into!("duration", cfg.duration, f64);
        parse_into!("dt_out", cfg.dt_out, f64);
        parse_into!("rate_counts_lo", cfg.rate_counts_lo, f64);
        parse_into!("rate_counts_hi", cfg.rate_counts_hi, f64);
        parse_into!("a0", cfg.return_model.a0, f64);
        parse_into!("b0", cfg.return_model.b0, f64);
        parse_into!("delta", cfg.return_model.delta, f64);
        parse_into!("rolling_window", cfg.rolling_window, usize);
        parse_into!("hurst", cfg.fbm.hurst, f64);
        parse_into!("n", cfg.fbm.n, usize);
        parse_into!("fbm_dt", cfg.fbm.dt, f64);
        parse_into!("sigma", cfg.fbm.sigma, f64);
        parse_into!("ensemble", cfg.ensemble, usize);
        parse_into!("bin_seconds", cfg.poisson.bin_seconds, f64);
        parse_into!("ma_window", cfg.poisson.ma_window, usize);
        parse_into!("splice_gaps", cfg.splice_gaps, bool);
        parse_into!("delta_steps", cfg.delta_steps, usize);
        parse_into!("psd_segment_len", cfg.psd_segment_len, usize);
        parse_into!("psd_overlap", cfg.psd_overlap, f64);
        parse_into!("psd_bins_per_decade", cfg.psd_bins_per_decade, usize);
        parse_into!("bins_per_decade", cfg.bins_per_decade, usize);
        parse_into!("threads", cfg.threads, usize);

        for (key, target) in [
            ("psd_fit_lo", &mut cfg.psd_fit_lo),
            ("psd_fit_hi", &mut cfg.psd_fit_hi),
            ("fit_lo", &mut cfg.fit_lo),
            ("fit_hi", &mut cfg.fit_hi),
        ] {
            if let Some(v) = raw.get(key) {
                match v.parse::<f64>() {
                    Ok(parsed) => *target = Some(parsed),
                    Err(_) => problems.push(format!("{key}: cannot parse {v:?}")),
                }
            }
        }

        if let Some(v) = raw.get("csv_path") {
            cfg.csv_path = Some(PathBuf::from(v));
        }
        if let Some(v) = raw.get("csv_paths") {
            cfg.csv_paths = v.split(',').map(|p| PathBuf::from(p.trim())).collect();
        }
        if let Some(v) = raw.get("out") {
            cfg.out_dir = PathBuf::from(v);
        }
        match raw.get("seed") {
            Some(v) => match v.parse::<u64>() {
                Ok(s) => cfg.seed = s,
                Err(_) => problems.push(format!("seed: cannot parse {v:?}")),
            },
            None => {
                // Absent seed: generate one and record it in provenance.
                cfg.seed = rand::rng().random();
                cfg.seed_generated = true;
            }
        }

        cfg.raw = raw;
        cfg.apply_preset();
        cfg.collect_validation_problems(&mut problems);
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Presets fix the filter chain and thresholds to the figure workflows;
    /// explicitly configured thresholds win.
    fn apply_preset(&mut self) {
        let explicit_thresholds = self.raw.contains_key("thresholds");
        match self.preset {
            Preset::Activity => {
                self.filter = FilterKind::Anscombe;
                self.normalize = true;
                if !explicit_thresholds {
                    self.thresholds = ACTIVITY_THRESHOLDS.to_vec();
                }
            }
            Preset::Returns => {
                self.filter = FilterKind::RollingStd;
                self.normalize = true;
                if !explicit_thresholds {
                    self.thresholds = RETURNS_THRESHOLDS.to_vec();
                }
            }
            Preset::Daily => {
                self.filter = FilterKind::RollingStd;
                self.normalize = true;
                if !explicit_thresholds {
                    self.thresholds = DAILY_THRESHOLDS.to_vec();
                }
            }
            Preset::Custom => {}
        }
    }

    fn collect_validation_problems(&self, problems: &mut Vec<String>) {
        match self.source {
            SourceKind::Sde => {
                if let Err(e) = self.sde.validate() {
                    problems.push(format!("sde: {e}"));
                }
                if !(self.duration > 0.0 && self.dt_out > 0.0) {
                    problems.push("duration and dt_out must be > 0".into());
                }
            }
            SourceKind::Fbm => {
                if let Err(e) = self.fbm.validate() {
                    problems.push(format!("fbm: {e}"));
                }
            }
            SourceKind::Events | SourceKind::Csv => {
                let paths: Vec<&PathBuf> = self
                    .csv_path
                    .iter()
                    .chain(self.csv_paths.iter())
                    .collect();
                if paths.is_empty() {
                    problems.push("csv/events source needs csv_path or csv_paths".into());
                }
                for p in paths {
                    if !p.exists() {
                        problems.push(format!("referenced file does not exist: {}", p.display()));
                    }
                }
            }
        }
        for h in &self.thresholds {
            if !h.is_finite() {
                problems.push(format!("threshold {h} is not finite"));
            }
        }
        if self.thresholds.is_empty() {
            problems.push("at least one threshold is required".into());
        }
        if self.rolling_window < 2 && matches!(self.filter, FilterKind::RollingStd) {
            problems.push("rolling_window must be >= 2".into());
        }
        if let Err(e) = self.poisson.validate() {
            problems.push(format!("poisson: {e}"));
        }
        if self.psd_segment_len < 16 {
            problems.push("psd_segment_len must be >= 16".into());
        }
        if self.bins_per_decade == 0 || self.psd_bins_per_decade == 0 {
            problems.push("bins_per_decade must be >= 1".into());
        }
        if self.ensemble == 0 {
            problems.push("ensemble must be >= 1".into());
        }
    }
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub seed_generated: bool,
    pub build: String,
    /// Ordered names of the transforms actually executed.
    pub trace: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub kind: DurationKind,
    pub n_durations: usize,
    pub mle: Option<PowerLawFit>,
    pub histogram_slope: Option<PowerLawFit>,
    pub fit_window: (f64, f64),
    pub histogram: LogHistogram,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub h: f64,
    pub n_bursts: usize,
    pub n_interbursts: usize,
    pub edge_censored: usize,
    pub censored_time: f64,
    pub span: f64,
    pub bursts: FitReport,
    pub interbursts: FitReport,
    /// The fit feeding the verdict: bursts below h = 1, inter-bursts above,
    /// both kinds pooled at h <= 0 where the two laws coincide.
    pub verdict_fit: Option<PowerLawFit>,
    /// Durations with their pooled-source labels, emitted to CSV.
    pub burst_rows: Vec<DurationRow>,
    pub interburst_rows: Vec<DurationRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DurationRow {
    pub kind: DurationKind,
    pub source: usize,
    pub start: f64,
    pub end: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsdReport {
    pub segment_len: usize,
    pub overlap: f64,
    pub spectrum: SpectrumEstimate,
    pub single: PowerLawFit,
    pub two_regime: TwoRegimeFit,
    /// Hurst from the governing low-frequency exponent, H = (beta1 - 1)/2
    /// (falls back to the single fit when the break is unreliable).
    pub hurst: f64,
    pub hurst_in_range: bool,
    pub hurst_stderr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    /// Inverse-variance weighted duration exponent over the informative
    /// sides (bursts at low thresholds, inter-bursts at high ones).
    pub duration_exponent: f64,
    pub duration_stderr: f64,
    pub markov_exponent: f64,
    /// 2 - H with H from the PSD fit.
    pub fbm_exponent: f64,
    pub fbm_exponent_stderr: f64,
    /// |duration_exponent - 3/2| in joint standard errors.
    pub distance_markov_sigma: f64,
    /// |duration_exponent - (2 - H_psd)| in joint standard errors.
    pub distance_fbm_sigma: f64,
    /// "markov" when the measured exponent is closer (in sigma) to 3/2
    /// than to 2 - H_psd.
    pub classification: String,
    pub consistent_with_three_halves: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSummary {
    pub kind: SourceKind,
    pub n_series: usize,
    pub n_samples: usize,
    pub dt: f64,
    pub normalization_scale: Vec<f64>,
    pub anscombe_clamped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub provenance: Provenance,
    pub source: SourceSummary,
    pub thresholds: Vec<ThresholdReport>,
    pub psd: PsdReport,
    pub verdict: Verdict,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Report> {
        let report: Report = serde_json::from_str(text)?;
        report.validate()?;
        Ok(report)
    }

    pub fn sha256(&self) -> Result<String> {
        Ok(hex_digest(self.to_json()?.as_bytes()))
    }

    /// Schema validation: version string plus presence of every block.
    pub fn validate(&self) -> Result<()> {
        if self.schema != REPORT_SCHEMA {
            return Err(Error::ReportSchema(format!(
                "schema {:?} is not {REPORT_SCHEMA:?}",
                self.schema
            )));
        }
        if self.thresholds.is_empty() {
            return Err(Error::ReportSchema("no threshold blocks".into()));
        }
        Ok(())
    }

    /// Validate an untyped JSON value against the report schema; used to
    /// reject structurally broken documents (e.g. a missing verdict block).
    pub fn validate_json(value: &serde_json::Value) -> Result<()> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::ReportSchema("report is not an object".into()))?;
        match obj.get("schema").and_then(|s| s.as_str()) {
            Some(REPORT_SCHEMA) => {}
            other => {
                return Err(Error::ReportSchema(format!(
                    "schema {other:?} is not {REPORT_SCHEMA:?}"
                )))
            }
        }
        for block in ["provenance", "source", "thresholds", "psd", "verdict"] {
            if !obj.contains_key(block) {
                return Err(Error::ReportSchema(format!("missing {block:?} block")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Pipeline execution
// ---------------------------------------------------------------------------

struct Prepared {
    /// Analyzed series, one per source (presets other than daily use one).
    series: Vec<UniformSeries>,
    scales: Vec<f64>,
    clamped: usize,
    trace: Vec<String>,
}

fn prepare_sources(cfg: &PipelineConfig) -> Result<Prepared> {
    let mut trace = Vec::new();
    let mut raw_series: Vec<UniformSeries> = Vec::new();
    let mut clamped_total = 0usize;

    // Simulated sources can pool an ensemble of independent realizations;
    // member k draws from seed streams (2k, 2k + 1).
    let members = cfg.ensemble.max(1);
    match cfg.source {
        SourceKind::Sde => {
            for member in 0..members as u64 {
                match cfg.filter {
                    FilterKind::Anscombe => {
                        // Activity route: state -> counts/bin -> quasi-Poisson
                        // events -> recovered activity.
                        let state = simulate_sde(
                            &cfg.sde,
                            cfg.duration,
                            cfg.dt_out,
                            derived(cfg.seed, 2 * member),
                        )?;
                        trace.push("simulate_sde".into());
                        let bin = cfg.poisson.bin_seconds;
                        let counts_per_bin: Vec<f64> = state
                            .values()
                            .iter()
                            .map(|x| x.clamp(cfg.rate_counts_lo, cfg.rate_counts_hi))
                            .collect();
                        let rate = UniformSeries::new(
                            0.0,
                            bin,
                            counts_per_bin.iter().map(|c| c / bin).collect(),
                        )?;
                        trace.push("rate_map".into());
                        let events = generate_events(&rate, derived(cfg.seed, 2 * member + 1))?;
                        trace.push("generate_events".into());
                        let (series, clamped) = denoise_traced(
                            cfg,
                            &events,
                            &mut trace,
                            0.0,
                            rate.len() as f64 * bin,
                        )?;
                        clamped_total += clamped;
                        raw_series.push(series);
                    }
                    FilterKind::RollingStd => {
                        let returns = generate_model_returns(
                            &cfg.sde,
                            &cfg.return_model,
                            cfg.duration,
                            derived(cfg.seed, 2 * member),
                        )?;
                        trace.push("generate_model_returns".into());
                        let vol = returns.rolling_std(cfg.rolling_window)?;
                        trace.push("rolling_std".into());
                        raw_series.push(vol);
                    }
                    FilterKind::None => {
                        let state = simulate_sde(
                            &cfg.sde,
                            cfg.duration,
                            cfg.dt_out,
                            derived(cfg.seed, 2 * member),
                        )?;
                        trace.push("simulate_sde".into());
                        raw_series.push(state);
                    }
                }
            }
        }
        SourceKind::Fbm => {
            for member in 0..members as u64 {
                let sample = simulate_fbm(&cfg.fbm, derived(cfg.seed, 2 * member))?;
                trace.push(format!("simulate_fbm[{:?}]", sample.method));
                let series = sample.series;
                let filtered = match cfg.filter {
                    FilterKind::RollingStd => {
                        trace.push("rolling_std".into());
                        series.rolling_std(cfg.rolling_window)?
                    }
                    _ => series,
                };
                raw_series.push(filtered);
            }
        }
        SourceKind::Events => {
            let paths = config_paths(cfg);
            for path in paths {
                let events = io::read_events(&path)?;
                trace.push(format!("read_events[{}]", path.display()));
                let (series, clamped) = denoise_from_events(cfg, &events, &mut trace)?;
                clamped_total += clamped;
                raw_series.push(series);
            }
        }
        SourceKind::Csv => {
            let paths = config_paths(cfg);
            for path in paths {
                match cfg.csv_kind {
                    CsvKind::Series => {
                        let series = io::read_series(&path)?;
                        trace.push(format!("read_series[{}]", path.display()));
                        raw_series.push(apply_series_filter(cfg, series, &mut trace)?);
                    }
                    CsvKind::Ticks => {
                        let prices = io::read_ticks(&path, cfg.splice_gaps)?;
                        trace.push(format!("read_ticks[{}]", path.display()));
                        let returns = prices.log_returns(cfg.delta_steps)?;
                        trace.push("log_returns".into());
                        raw_series.push(apply_series_filter(cfg, returns, &mut trace)?);
                    }
                    CsvKind::Events => {
                        let events = io::read_events(&path)?;
                        trace.push(format!("read_events[{}]", path.display()));
                        let (series, clamped) = denoise_from_events(cfg, &events, &mut trace)?;
                        clamped_total += clamped;
                        raw_series.push(series);
                    }
                }
            }
        }
    }

    let mut series = Vec::new();
    let mut scales = Vec::new();
    for s in raw_series {
        if cfg.normalize {
            let (normalized, scale) = s.normalize_unit_std()?;
            trace.push("normalize_unit_std".into());
            scales.push(scale);
            series.push(normalized);
        } else {
            scales.push(1.0);
            series.push(s);
        }
    }
    Ok(Prepared {
        series,
        scales,
        clamped: clamped_total,
        trace,
    })
}

fn apply_series_filter(
    cfg: &PipelineConfig,
    series: UniformSeries,
    trace: &mut Vec<String>,
) -> Result<UniformSeries> {
    match cfg.filter {
        FilterKind::RollingStd => {
            trace.push("rolling_std".into());
            series.rolling_std(cfg.rolling_window)
        }
        _ => Ok(series),
    }
}

fn denoise_from_events(
    cfg: &PipelineConfig,
    events: &EventStream,
    trace: &mut Vec<String>,
) -> Result<(UniformSeries, usize)> {
    if events.is_empty() {
        return Err(Error::EmptyInput("events source"));
    }
    let bin = cfg.poisson.bin_seconds;
    let first = events.timestamps()[0];
    let last = *events.timestamps().last().unwrap();
    let t_start = (first / bin).floor() * bin;
    let full_bins = ((last - t_start) / bin).floor().max(1.0);
    denoise_traced(cfg, events, trace, t_start, t_start + full_bins * bin)
}

/// The activity chain applied step by step so the execution trace records
/// the exact order: bin -> Anscombe -> MA -> inverse. Mirrors
/// [`crate::point_process::denoise_activity_over`].
fn denoise_traced(
    cfg: &PipelineConfig,
    events: &EventStream,
    trace: &mut Vec<String>,
    t_start: f64,
    t_end: f64,
) -> Result<(UniformSeries, usize)> {
    let counts = bin_counts(events, cfg.poisson.bin_seconds, t_start, t_end)?;
    trace.push("bin_counts".into());
    let forward = anscombe_forward(&counts)?;
    trace.push("anscombe_forward".into());
    let smoothed = forward.moving_average(cfg.poisson.ma_window)?;
    trace.push("moving_average".into());
    let (activity, clamped) = anscombe_inverse_unbiased(&smoothed)?;
    trace.push("anscombe_inverse_unbiased".into());
    Ok((activity, clamped))
}

fn config_paths(cfg: &PipelineConfig) -> Vec<PathBuf> {
    let mut paths = Vec::new();
    if let Some(p) = &cfg.csv_path {
        paths.push(p.clone());
    }
    paths.extend(cfg.csv_paths.iter().cloned());
    paths
}

fn derived(seed: u64, stream: u64) -> u64 {
    let mut rng = child_rng(seed, stream);
    rng.random()
}

fn duration_rows(kind: DurationKind, sets: &[BurstSet]) -> Vec<DurationRow> {
    let mut rows = Vec::new();
    for (source, set) in sets.iter().enumerate() {
        let intervals = match kind {
            DurationKind::Burst => &set.bursts,
            DurationKind::Interburst => &set.interbursts,
        };
        for iv in intervals {
            rows.push(DurationRow {
                kind,
                source,
                start: iv.start,
                end: iv.end,
                duration: iv.duration,
            });
        }
    }
    rows
}

fn fit_pool(
    cfg: &PipelineConfig,
    pool: &PooledDurations,
    dt: f64,
    span: f64,
) -> FitReport {
    let durations = pool.durations();
    let window = (
        cfg.fit_lo.unwrap_or(10.0 * dt),
        cfg.fit_hi.unwrap_or(span / 100.0),
    );
    let histogram = duration_histogram(&durations, cfg.bins_per_decade).unwrap_or(LogHistogram {
        edges: vec![],
        counts: vec![],
        density: vec![],
    });
    let mle = fit_duration_exponent_mle(&durations, window.0, window.1).ok();
    let histogram_slope = if histogram.is_empty() {
        None
    } else {
        fit_histogram_slope(&histogram, window).ok()
    };
    FitReport {
        kind: pool.kind,
        n_durations: durations.len(),
        mle,
        histogram_slope,
        fit_window: window,
        histogram,
    }
}

/// Execute the configured chain deterministically and assemble the report.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Report> {
    let prepared = prepare_sources(cfg)?;
    let mut trace = prepared.trace;
    let series = &prepared.series;
    if series.is_empty() {
        return Err(Error::EmptyInput("pipeline produced no series"));
    }
    let dt = series[0].dt();
    let total_samples: usize = series.iter().map(|s| s.len()).sum();
    let max_span = series
        .iter()
        .map(|s| s.len() as f64 * s.dt())
        .fold(0.0, f64::max);

    // Threshold sweep with per-threshold pooling across sources; the
    // thresholds are independent and run in parallel, collected in config
    // order so reports stay deterministic.
    let all_sets: Vec<Vec<BurstSet>> = cfg
        .thresholds
        .par_iter()
        .map(|&h| series.iter().map(|s| extract_bursts(s, h)).collect())
        .collect();
    let mut threshold_reports = Vec::new();
    for (&h, sets) in cfg.thresholds.iter().zip(all_sets) {
        trace.push(format!("extract_bursts[h={h}]"));
        let burst_pool = pool_durations(&sets, DurationKind::Burst);
        let inter_pool = pool_durations(&sets, DurationKind::Interburst);
        let bursts = fit_pool(cfg, &burst_pool, dt, max_span);
        let interbursts = fit_pool(cfg, &inter_pool, dt, max_span);
        let window = bursts.fit_window;
        let verdict_durations: Vec<f64> = if h <= 0.0 {
            let mut d = burst_pool.durations();
            d.extend(inter_pool.durations());
            d
        } else if h < 1.0 {
            burst_pool.durations()
        } else {
            inter_pool.durations()
        };
        let verdict_fit =
            fit_duration_exponent_mle(&verdict_durations, window.0, window.1).ok();
        threshold_reports.push(ThresholdReport {
            h,
            n_bursts: burst_pool.entries.len(),
            n_interbursts: inter_pool.entries.len(),
            edge_censored: sets.iter().map(|s| s.edge_censored).sum(),
            censored_time: sets.iter().map(|s| s.censored_time(dt)).sum(),
            span: sets.iter().map(|s| s.span).sum(),
            bursts,
            interbursts,
            verdict_fit,
            burst_rows: duration_rows(DurationKind::Burst, &sets),
            interburst_rows: duration_rows(DurationKind::Interburst, &sets),
        });
    }

    // PSD of the (first) analyzed series.
    let segment_len = cfg.psd_segment_len.min(series[0].len() / 2).max(16);
    let spectrum_full = welch_psd(&series[0], segment_len, cfg.psd_overlap)?;
    trace.push("welch_psd".into());
    let spectrum = log_bin_spectrum(&spectrum_full, cfg.psd_bins_per_decade);
    trace.push("log_bin_spectrum".into());
    let f_lo = cfg.psd_fit_lo.unwrap_or(spectrum.frequencies[0]);
    let f_hi = cfg
        .psd_fit_hi
        .unwrap_or_else(|| spectrum.frequencies.last().copied().unwrap_or(1.0) / 4.0);
    let single = fit_spectrum(&spectrum, (f_lo, f_hi))?;
    let grid: Vec<f64> = spectrum
        .frequencies
        .iter()
        .copied()
        .filter(|f| *f > f_lo && *f < f_hi)
        .collect();
    let two_regime = fit_two_regime_psd(&spectrum, &grid)?;
    trace.push("fit_psd".into());
    let (beta, beta_stderr) = if two_regime.break_reliable {
        (two_regime.low_f.exponent, two_regime.low_f.stderr)
    } else {
        (single.exponent, single.stderr)
    };
    let (hurst, hurst_in_range) = hurst_from_beta(beta);
    let psd_report = PsdReport {
        segment_len,
        overlap: cfg.psd_overlap,
        spectrum,
        single,
        two_regime,
        hurst,
        hurst_in_range,
        hurst_stderr: beta_stderr / 2.0,
    };

    let verdict = build_verdict(&threshold_reports, &psd_report);
    trace.push("verdict".into());

    let report = Report {
        schema: REPORT_SCHEMA.to_string(),
        provenance: Provenance {
            config: cfg.raw.clone(),
            seed: cfg.seed,
            seed_generated: cfg.seed_generated,
            build: format!("burstlab/{}", env!("CARGO_PKG_VERSION")),
            trace,
        },
        source: SourceSummary {
            kind: cfg.source,
            n_series: series.len(),
            n_samples: total_samples,
            dt,
            normalization_scale: prepared.scales,
            anscombe_clamped: prepared.clamped,
        },
        thresholds: threshold_reports,
        psd: psd_report,
        verdict,
    };
    report.validate()?;
    Ok(report)
}

/// Floor on the exponent standard error entering the verdict distances:
/// very large samples shrink the statistical error below the finite-window
/// systematics of the fit, and sigma distances would otherwise explode.
pub const VERDICT_STDERR_FLOOR: f64 = 0.05;

/// The verdict operationalizes the discrimination test: the measured
/// duration exponent is compared, in joint standard errors, against the
/// Markov value 3/2 and against the fBm prediction 2 - H with H taken from
/// the spectral fit. Bursts carry the information at low thresholds and
/// inter-bursts at high ones (wide events, least contaminated), so each
/// threshold contributes its informative side; at h <= 0 both sides share
/// one law and are pooled.
fn build_verdict(thresholds: &[ThresholdReport], psd: &PsdReport) -> Verdict {
    let mut weighted = 0.0;
    let mut weight = 0.0;
    for tr in thresholds {
        if let Some(f) = &tr.verdict_fit {
            if f.stderr.is_finite() && f.stderr > 0.0 {
                let w = 1.0 / (f.stderr * f.stderr);
                weighted += w * f.exponent;
                weight += w;
            }
        }
    }
    let (exponent, stderr) = if weight > 0.0 {
        (weighted / weight, (1.0 / weight).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    let fbm_exponent = 2.0 - psd.hurst;
    let fbm_stderr = psd.hurst_stderr;
    let sigma = stderr.max(VERDICT_STDERR_FLOOR);
    let d_markov = (exponent - 1.5).abs() / sigma;
    let d_fbm =
        (exponent - fbm_exponent).abs() / (sigma * sigma + fbm_stderr * fbm_stderr).sqrt();
    let classification = if d_markov.is_nan() || d_fbm.is_nan() {
        "undetermined".to_string()
    } else if d_markov <= d_fbm {
        "markov".to_string()
    } else {
        "fbm".to_string()
    };
    Verdict {
        duration_exponent: exponent,
        duration_stderr: stderr,
        markov_exponent: 1.5,
        fbm_exponent,
        fbm_exponent_stderr: fbm_stderr,
        distance_markov_sigma: d_markov,
        distance_fbm_sigma: d_fbm,
        classification,
        consistent_with_three_halves: d_markov <= 3.0,
    }
}

// ---------------------------------------------------------------------------
// Artifact emission
// ---------------------------------------------------------------------------

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

fn write_artifact(
    dir: &Path,
    name: &str,
    content: &str,
    manifest: &mut Vec<ManifestEntry>,
) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    manifest.push(ManifestEntry {
        path: name.to_string(),
        sha256: hex_digest(content.as_bytes()),
        bytes: content.len(),
    });
    Ok(path)
}

fn threshold_tag(h: f64) -> String {
    format!("{h}").replace('.', "p").replace('-', "m")
}

/// Write the report JSON, per-threshold histogram JSONs and durations CSVs,
/// the spectrum CSV, and a manifest with content hashes. Returns the paths
/// written.
pub fn emit_report(report: &Report, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut manifest = Vec::new();
    let mut written = Vec::new();

    written.push(write_artifact(
        dir,
        "report.json",
        &report.to_json()?,
        &mut manifest,
    )?);

    // Spectrum CSV: f,power.
    let mut spectrum_csv = String::from("f,power\n");
    for (f, p) in report
        .psd
        .spectrum
        .frequencies
        .iter()
        .zip(&report.psd.spectrum.power)
    {
        let _ = writeln!(spectrum_csv, "{f},{p}");
    }
    written.push(write_artifact(
        dir,
        "spectrum.csv",
        &spectrum_csv,
        &mut manifest,
    )?);

    for tr in &report.thresholds {
        let tag = threshold_tag(tr.h);
        // Durations CSV: kind,start,end,duration.
        let mut durations_csv = String::from("kind,start,end,duration\n");
        for row in tr.burst_rows.iter().chain(&tr.interburst_rows) {
            let _ = writeln!(
                durations_csv,
                "{},{},{},{}",
                row.kind.label(),
                row.start,
                row.end,
                row.duration
            );
        }
        written.push(write_artifact(
            dir,
            &format!("durations_h{tag}.csv"),
            &durations_csv,
            &mut manifest,
        )?);

        for (kind, fit) in [("burst", &tr.bursts), ("interburst", &tr.interbursts)] {
            if fit.histogram.is_empty() {
                continue;
            }
            let body = serde_json::to_string_pretty(&fit.histogram)?;
            written.push(write_artifact(
                dir,
                &format!("histogram_{kind}_h{tag}.json"),
                &body,
                &mut manifest,
            )?);
        }
    }

    let manifest_json = serde_json::to_string_pretty(&Manifest { files: manifest })?;
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, manifest_json).map_err(|e| Error::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    written.push(manifest_path);
    Ok(written)
}

/// Emit a gnuplot script that draws the log-log duration PDFs per threshold
/// with a reference T^{-3/2} guide line, and the log-log PSD with the two
/// fitted segments and the break-frequency annotation. References only
/// files present in the manifest.
pub fn emit_plot_script(report: &Report, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut s = String::new();
    let _ = writeln!(s, "# burstlab plots (gnuplot)");
    let _ = writeln!(s, "set logscale xy");
    let _ = writeln!(s, "set terminal pngcairo size 900,700");
    let _ = writeln!(s, "set style data points");
    let _ = writeln!(s);

    let _ = writeln!(s, "set output 'duration_pdfs.png'");
    let _ = writeln!(s, "set xlabel 'T (s)'");
    let _ = writeln!(s, "set ylabel 'p(T)'");
    let _ = writeln!(s, "ref(x) = refA * x**(-1.5)");
    let _ = writeln!(s, "refA = 1.0");
    let mut plots = Vec::new();
    for tr in &report.thresholds {
        let tag = threshold_tag(tr.h);
        plots.push(format!(
            "'durations_h{tag}.csv' using 4:(1.0) smooth freq title 'h={}'",
            tr.h
        ));
    }
    plots.push("ref(x) title 'T^{-3/2} guide' with lines lc 'black'".to_string());
    let _ = writeln!(s, "plot \\\n  {}", plots.join(", \\\n  "));
    let _ = writeln!(s);

    let _ = writeln!(s, "set output 'psd.png'");
    let _ = writeln!(s, "set xlabel 'f (Hz)'");
    let _ = writeln!(s, "set ylabel 'S(f)'");
    let low = &report.psd.two_regime.low_f;
    let high = &report.psd.two_regime.high_f;
    let fb = report.psd.two_regime.f_break;
    let _ = writeln!(s, "beta1(x) = exp({}) * x**(-{})", low.intercept, low.exponent);
    let _ = writeln!(s, "beta2(x) = exp({}) * x**(-{})", high.intercept, high.exponent);
    let _ = writeln!(s, "set arrow from {fb}, graph 0 to {fb}, graph 1 nohead dt 2");
    let _ = writeln!(s, "set label 'f_b = {fb}' at {fb}, graph 0.95");
    let _ = writeln!(
        s,
        "plot 'spectrum.csv' using 1:2 title 'PSD', \\\n  [{}:{fb}] beta1(x) title 'beta1 = {:.3}' with lines, \\\n  [{fb}:{}] beta2(x) title 'beta2 = {:.3}' with lines",
        low.range.0, low.exponent, high.range.1, high.exponent
    );

    let path = dir.join("plot.gp");
    std::fs::write(&path, s).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_sde_config(seed: u64) -> PipelineConfig {
        let text = format!(
            "source = sde\npreset = returns\neta = 2.5\nlambda = 3.0\nkappa = 0.05\n\
             duration = 60\ndelta = 0.001\ndt_out = 0.001\nseed = {seed}\nthresholds = 0.4, 1.0"
        );
        PipelineConfig::from_str(&text).unwrap()
    }

    #[test]
    fn config_parse_and_preset() {
        let cfg = desk_sde_config(7);
        assert_eq!(cfg.source, SourceKind::Sde);
        assert_eq!(cfg.preset, Preset::Returns);
        assert_eq!(cfg.filter, FilterKind::RollingStd);
        assert_eq!(cfg.thresholds, vec![0.4, 1.0]);
        assert!(!cfg.seed_generated);

        let with_preset_thresholds =
            PipelineConfig::from_str("source = sde\npreset = returns\nseed = 1").unwrap();
        assert_eq!(with_preset_thresholds.thresholds, RETURNS_THRESHOLDS.to_vec());
    }

    #[test]
    fn config_errors_collected_in_one_pass() {
        let text = "source = nowhere\npreset = bogus\nthresholds = a, 0.4\nseed = x";
        match PipelineConfig::from_str(text) {
            Err(Error::Config(problems)) => {
                assert!(problems.len() >= 4, "problems: {problems:?}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_csv_path_is_validation_error() {
        let res = PipelineConfig::from_str("source = csv\nseed = 1");
        assert!(matches!(res, Err(Error::Config(_))));
    }

    #[test]
    fn run_is_deterministic_and_hash_stable() {
        let cfg = desk_sde_config(11);
        let a = run_pipeline(&cfg).unwrap();
        let b = run_pipeline(&cfg).unwrap();
        assert_eq!(a.sha256().unwrap(), b.sha256().unwrap());
        let c = run_pipeline(&desk_sde_config(12)).unwrap();
        assert_ne!(a.sha256().unwrap(), c.sha256().unwrap());
    }

    #[test]
    fn activity_preset_trace_order() {
        let text = "source = sde\npreset = activity\neta = 2.5\nlambda = 3.0\nkappa = 0.1\n\
                    duration = 3\ndt_out = 0.001\nseed = 5\nbin_seconds = 60\nma_window = 10";
        let cfg = PipelineConfig::from_str(text).unwrap();
        let report = run_pipeline(&cfg).unwrap();
        let trace = &report.provenance.trace;
        let expected_prefix = [
            "simulate_sde",
            "rate_map",
            "generate_events",
            "bin_counts",
            "anscombe_forward",
            "moving_average",
            "anscombe_inverse_unbiased",
            "normalize_unit_std",
        ];
        assert!(
            trace.len() >= expected_prefix.len(),
            "trace too short: {trace:?}"
        );
        for (got, want) in trace.iter().zip(expected_prefix.iter()) {
            assert_eq!(got, want, "trace: {trace:?}");
        }
    }

    #[test]
    fn activity_route_matches_denoise_activity() {
        use crate::point_process::denoise_activity_over;
        // The traced pipeline steps must reproduce the standalone op.
        let cfg = PipelineConfig::from_str(
            "source = sde\npreset = activity\nduration = 3\ndt_out = 0.001\nseed = 9",
        )
        .unwrap();
        let state = simulate_sde(&cfg.sde, cfg.duration, cfg.dt_out, derived(cfg.seed, 0)).unwrap();
        let bin = cfg.poisson.bin_seconds;
        let rate = UniformSeries::new(
            0.0,
            bin,
            state
                .values()
                .iter()
                .map(|x| x.clamp(cfg.rate_counts_lo, cfg.rate_counts_hi) / bin)
                .collect(),
        )
        .unwrap();
        let events = generate_events(&rate, derived(cfg.seed, 1)).unwrap();
        let mut trace = Vec::new();
        let (traced, _) =
            denoise_traced(&cfg, &events, &mut trace, 0.0, rate.len() as f64 * bin).unwrap();
        let standalone =
            denoise_activity_over(&events, &cfg.poisson, 0.0, rate.len() as f64 * bin).unwrap();
        assert_eq!(traced.values(), standalone.activity.values());
    }

    #[test]
    fn report_json_round_trip_and_schema() {
        let cfg = desk_sde_config(13);
        let report = run_pipeline(&cfg).unwrap();
        let json = report.to_json().unwrap();
        let back = Report::from_json(&json).unwrap();
        assert_eq!(report.sha256().unwrap(), back.sha256().unwrap());

        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        Report::validate_json(&value).unwrap();
        value.as_object_mut().unwrap().remove("verdict");
        assert!(Report::validate_json(&value).is_err());
    }

    #[test]
    fn emit_report_writes_manifest_and_hashes() {
        let cfg = desk_sde_config(17);
        let report = run_pipeline(&cfg).unwrap();
        let dir = std::env::temp_dir().join("burstlab-emit-test");
        let _ = std::fs::remove_dir_all(&dir);
        let written = emit_report(&report, &dir).unwrap();
        assert!(written.iter().any(|p| p.ends_with("report.json")));
        let manifest: Manifest = serde_json::from_str(
            &std::fs::read_to_string(dir.join("manifest.json")).unwrap(),
        )
        .unwrap();
        for entry in &manifest.files {
            let body = std::fs::read(dir.join(&entry.path)).unwrap();
            assert_eq!(hex_digest(&body), entry.sha256, "hash mismatch {}", entry.path);
        }
        // Plot script references only manifest files.
        let script_path = emit_plot_script(&report, &dir).unwrap();
        let script = std::fs::read_to_string(&script_path).unwrap();
        for token in script.split('\'') {
            if token.ends_with(".csv") || token.ends_with(".json") {
                assert!(
                    manifest.files.iter().any(|f| f.path == token),
                    "plot references {token} not in manifest"
                );
            }
        }
        assert!(script.contains("-1.5"), "reference guide line slope");
        assert!(script.contains("beta1"), "two fitted segments expected");
        assert!(script.contains("f_b"), "break annotation expected");
    }
}
