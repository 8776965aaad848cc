//! Threshold-passage statistics: burst / inter-burst extraction, log-binned
//! duration histograms, pooling, and the theoretical burst-duration law with
//! its Bessel-zero cutoff.
//!
//! A burst is a maximal run of samples strictly above the threshold `h`
//! bounded by samples `<= h` on both sides; an inter-burst is a maximal run
//! `<= h` bounded by samples `> h`. Leading and trailing partial runs are
//! censored (counted, not measured): including them would bias the short
//! bins. Durations use the sample-count convention (run length times `dt`)
//! by default; a linearly interpolated crossing-to-crossing mode is
//! available and reported separately.

use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_first_zero, bessel_index};
use crate::error::{Error, Result};
use crate::series::UniformSeries;

pub const DEFAULT_BINS_PER_DECADE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DurationKind {
    Burst,
    Interburst,
}

impl DurationKind {
    pub fn label(self) -> &'static str {
        match self {
            DurationKind::Burst => "burst",
            DurationKind::Interburst => "interburst",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingMode {
    /// Duration = run length x dt. Tiling of bursts, inter-bursts and
    /// censored time is exact in sample counts.
    SampleCount,
    /// Duration = linearly interpolated crossing-to-crossing time.
    Interpolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstInterval {
    pub start: f64,
    pub end: f64,
    pub duration: f64,
    /// Run length in samples (also kept in interpolated mode).
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BurstSet {
    /// Threshold in units of the analyzed series (callers normalize first;
    /// this type does not re-normalize).
    pub threshold: f64,
    pub bursts: Vec<BurstInterval>,
    pub interbursts: Vec<BurstInterval>,
    /// Total analyzed time, `len * dt`.
    pub span: f64,
    /// Number of censored boundary segments (0, 1 or 2).
    pub edge_censored: usize,
    /// Samples inside censored boundary segments.
    pub censored_samples: usize,
    pub mode: CrossingMode,
}

impl BurstSet {
    pub fn burst_durations(&self) -> Vec<f64> {
        self.bursts.iter().map(|b| b.duration).collect()
    }

    pub fn interburst_durations(&self) -> Vec<f64> {
        self.interbursts.iter().map(|b| b.duration).collect()
    }

    pub fn durations(&self, kind: DurationKind) -> Vec<f64> {
        match kind {
            DurationKind::Burst => self.burst_durations(),
            DurationKind::Interburst => self.interburst_durations(),
        }
    }

    pub fn censored_time(&self, dt: f64) -> f64 {
        self.censored_samples as f64 * dt
    }
}

/// Extract bursts and inter-bursts at threshold `h` using the sample-count
/// convention. A series that never crosses `h` yields one fully censored
/// run and no events; that is a valid (empty) result, not an error.
pub fn extract_bursts(series: &UniformSeries, h: f64) -> BurstSet {
    extract_bursts_mode(series, h, CrossingMode::SampleCount)
}

pub fn extract_bursts_mode(series: &UniformSeries, h: f64, mode: CrossingMode) -> BurstSet {
    let v = series.values();
    let dt = series.dt();
    let n = v.len();

    // Run boundaries: indices where the above/below state flips.
    let mut runs: Vec<(usize, usize, bool)> = Vec::new(); // (start, len, above)
    let mut start = 0usize;
    let mut above = v[0] > h;
    for (i, val) in v.iter().enumerate().skip(1) {
        let a = *val > h;
        if a != above {
            runs.push((start, i - start, above));
            start = i;
            above = a;
        }
    }
    runs.push((start, n - start, above));

    let mut bursts = Vec::new();
    let mut interbursts = Vec::new();
    let mut censored_samples = 0usize;
    let mut edge_censored = 0usize;

    let last = runs.len() - 1;
    for (idx, &(s, len, is_above)) in runs.iter().enumerate() {
        if idx == 0 || idx == last {
            censored_samples += len;
            edge_censored += 1;
            continue;
        }
        let interval = match mode {
            CrossingMode::SampleCount => {
                let start_t = series.time_at(s);
                let duration = len as f64 * dt;
                BurstInterval {
                    start: start_t,
                    end: start_t + duration,
                    duration,
                    samples: len,
                }
            }
            CrossingMode::Interpolated => {
                // Entry crossing between s-1 and s, exit between s+len-1 and
                // s+len; both neighbors exist for interior runs.
                let t_in = crossing_time(series, s - 1, h);
                let t_out = crossing_time(series, s + len - 1, h);
                BurstInterval {
                    start: t_in,
                    end: t_out,
                    duration: t_out - t_in,
                    samples: len,
                }
            }
        };
        if is_above {
            bursts.push(interval);
        } else {
            interbursts.push(interval);
        }
    }
    // A constant-side series has a single run: one censored segment.
    BurstSet {
        threshold: h,
        bursts,
        interbursts,
        span: n as f64 * dt,
        edge_censored,
        censored_samples,
        mode,
    }
}

/// Linear interpolation of the time where the signal crosses `h` between
/// samples `i` and `i + 1`.
fn crossing_time(series: &UniformSeries, i: usize, h: f64) -> f64 {
    let v = series.values();
    let a = v[i];
    let b = v[i + 1];
    let frac = if b == a { 0.5 } else { (h - a) / (b - a) };
    series.time_at(i) + frac.clamp(0.0, 1.0) * series.dt()
}

/// Logarithmically binned empirical density estimate for positive values
/// (durations, state magnitudes, spectra). Empty bins are retained with
/// zero density; `sum(density * width) = 1` whenever any count is present.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogHistogram {
    /// Bin edges, increasing, length `bins + 1`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// counts / (N * bin width).
    pub density: Vec<f64>,
}

impl LogHistogram {
    /// Build from positive values with `bins_per_decade` geometric bins.
    pub fn from_values(values: &[f64], bins_per_decade: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("histogram values"));
        }
        if bins_per_decade == 0 {
            return Err(Error::InvalidParameter {
                name: "bins_per_decade",
                value: 0.0,
                constraint: "must be >= 1",
            });
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (i, v) in values.iter().enumerate() {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            min = min.min(*v);
            max = max.max(*v);
        }
        let bpd = bins_per_decade as f64;
        let (lo, n_bins) = if min == max {
            // Degenerate: a single one-bin-wide histogram around the value.
            (min * 10f64.powf(-0.5 / bpd), 1usize)
        } else {
            let decades = (max / min).log10();
            ((min), (decades * bpd).ceil().max(1.0) as usize)
        };
        let ratio = 10f64.powf(1.0 / bpd);
        let mut edges = Vec::with_capacity(n_bins + 1);
        let mut e = lo;
        for _ in 0..=n_bins {
            edges.push(e);
            e *= ratio;
        }
        // Nudge the final edge so the maximum lands inside the last bin.
        if *edges.last().unwrap() <= max {
            *edges.last_mut().unwrap() = max * (1.0 + 1e-12);
        }

        let mut counts = vec![0u64; n_bins];
        let log_lo = lo.ln();
        let log_ratio = ratio.ln();
        for v in values {
            let mut idx = ((v.ln() - log_lo) / log_ratio).floor() as isize;
            idx = idx.clamp(0, n_bins as isize - 1);
            let mut i = idx as usize;
            // Guard against rounding at bin boundaries.
            while i + 1 < n_bins && *v >= edges[i + 1] {
                i += 1;
            }
            while i > 0 && *v < edges[i] {
                i -= 1;
            }
            counts[i] += 1;
        }
        let total = values.len() as f64;
        let density: Vec<f64> = counts
            .iter()
            .enumerate()
            .map(|(i, c)| *c as f64 / (total * (edges[i + 1] - edges[i])))
            .collect();
        Ok(Self {
            edges,
            counts,
            density,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Geometric bin centers.
    pub fn centers(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|w| (w[0] * w[1]).sqrt())
            .collect()
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Integral of the density over the bins; 1 when any count is present.
    pub fn density_mass(&self) -> f64 {
        self.density
            .iter()
            .enumerate()
            .map(|(i, d)| d * (self.edges[i + 1] - self.edges[i]))
            .sum()
    }
}

/// Log-binned histogram of durations; `bins_per_decade` defaults to
/// [`DEFAULT_BINS_PER_DECADE`] at call sites.
pub fn duration_histogram(durations: &[f64], bins_per_decade: usize) -> Result<LogHistogram> {
    LogHistogram::from_values(durations, bins_per_decade)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledDuration {
    /// Index of the source BurstSet, the provenance label for reporting.
    pub source: usize,
    pub duration: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PooledDurations {
    pub kind: DurationKind,
    pub entries: Vec<PooledDuration>,
}

impl PooledDurations {
    pub fn durations(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.duration).collect()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.duration).sum()
    }

    /// Concatenate another pool of the same kind, keeping labels.
    pub fn merge(mut self, other: PooledDurations) -> Result<PooledDurations> {
        if self.kind != other.kind {
            return Err(Error::KindMismatch {
                left: self.kind.label(),
                right: other.kind.label(),
            });
        }
        let offset = self
            .entries
            .iter()
            .map(|e| e.source + 1)
            .max()
            .unwrap_or(0);
        self.entries.extend(
            other
                .entries
                .into_iter()
                .map(|e| PooledDuration {
                    source: e.source + offset,
                    duration: e.duration,
                }),
        );
        Ok(self)
    }
}

/// Pool one duration kind across several burst sets (e.g. the five daily
/// exchange-rate series), retaining which set each duration came from.
pub fn pool_durations(sets: &[BurstSet], kind: DurationKind) -> PooledDurations {
    let mut entries = Vec::new();
    for (source, set) in sets.iter().enumerate() {
        for d in set.durations(kind) {
            entries.push(PooledDuration {
                source,
                duration: d,
            });
        }
    }
    PooledDurations { kind, entries }
}

/// Parameters of the theoretical burst-duration law for the nonlinear SDE
/// class: p(T) ~ T^{-3/2} well below the crossover and
/// (1/T) exp(-decay_rate * T) well above it, with
/// `t_crossover = 2 / ((eta-1)^2 h^{2(eta-1)} j_{nu,1}^2)`.
///
/// `h` is the threshold in the process' own units (multiply a normalized
/// threshold by the normalization scale before building this).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BurstTheoryParams {
    pub eta: f64,
    pub lambda: f64,
    pub h: f64,
    pub nu: f64,
    pub j_nu_1: f64,
    pub t_crossover: f64,
}

impl BurstTheoryParams {
    pub fn new(eta: f64, lambda: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter {
                name: "h",
                value: h,
                constraint: "threshold must be > 0",
            });
        }
        let nu = bessel_index(eta, lambda)?;
        let j_nu_1 = bessel_first_zero(nu)?;
        let g = (eta - 1.0) * (eta - 1.0) * h.powf(2.0 * (eta - 1.0)) * j_nu_1 * j_nu_1;
        Ok(Self {
            eta,
            lambda,
            h,
            nu,
            j_nu_1,
            t_crossover: 2.0 / g,
        })
    }

    /// Exponential tail decay rate (eta-1)^2 h^{2(eta-1)} j_{nu,1}^2 / 2,
    /// the reciprocal of `t_crossover`.
    pub fn decay_rate(&self) -> f64 {
        1.0 / self.t_crossover
    }
}

/// Unnormalized theoretical burst-duration density: the asymptotic branch
/// selected by the side of `t_crossover` that `t` falls on. The law gives
/// only the two asymptotics; no smooth interpolation is claimed near the
/// seam, so use [`burst_pdf_branches`] to inspect both values there.
pub fn burst_pdf_theory(p: &BurstTheoryParams, t: f64) -> Result<f64> {
    let (power, exponential) = burst_pdf_branches_checked(p, t)?;
    Ok(if t < p.t_crossover { power } else { exponential })
}

/// Both asymptotic branch values at `t`: `(T^{-3/2}, (1/T) e^{-rate T})`.
pub fn burst_pdf_branches(p: &BurstTheoryParams, t: f64) -> (f64, f64) {
    (t.powf(-1.5), (1.0 / t) * (-p.decay_rate() * t).exp())
}

fn burst_pdf_branches_checked(p: &BurstTheoryParams, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            constraint: "duration must be > 0",
        });
    }
    Ok(burst_pdf_branches(p, t))
}
