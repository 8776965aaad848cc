//! Spectral estimation and power-law fitting: Welch periodograms with
//! optional log-frequency binning, one- and two-regime log-log fits, the
//! Hurst map H = (beta - 1)/2, and a maximum-likelihood exponent estimator
//! for truncated power-law durations.
//!
//! Sign convention, stated once: decaying spectra S(f) ~ f^(-beta) and
//! decaying densities p(T) ~ T^(-alpha) are reported with positive
//! `exponent` beta resp. alpha.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::passage::LogHistogram;
use crate::series::UniformSeries;
use crate::stats;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    /// Frequencies in Hz, increasing, within (0, Nyquist]; DC is dropped.
    pub frequencies: Vec<f64>,
    /// One-sided power spectral density, Parseval-consistent: the integral
    /// over frequency approximates the series variance.
    pub power: Vec<f64>,
    pub segments_used: usize,
    pub log_binned: bool,
}

/// Welch PSD: mean of Hann-windowed, mean-removed periodograms over
/// segments with the given overlap fraction (default 0.5 at call sites).
pub fn welch_psd(
    series: &UniformSeries,
    segment_len: usize,
    overlap_fraction: f64,
) -> Result<SpectrumEstimate> {
    if segment_len < 16 {
        return Err(Error::InvalidParameter {
            name: "segment_len",
            value: segment_len as f64,
            constraint: "must be >= 16",
        });
    }
    if series.len() < segment_len {
        return Err(Error::SeriesTooShort {
            required: segment_len,
            actual: series.len(),
        });
    }
    if !(0.0..=0.95).contains(&overlap_fraction) {
        return Err(Error::InvalidParameter {
            name: "overlap_fraction",
            value: overlap_fraction,
            constraint: "must be in [0, 0.95]",
        });
    }
    let n = segment_len;
    let fs = 1.0 / series.dt();
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let step = ((n as f64) * (1.0 - overlap_fraction)).max(1.0) as usize;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);

    let half = n / 2;
    let mut acc = vec![0.0; half];
    let mut segments_used = 0usize;
    let values = series.values();
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut start = 0usize;
    while start + n <= values.len() {
        let segment = &values[start..start + n];
        let mean = stats::mean(segment);
        for ((b, v), w) in buf.iter_mut().zip(segment).zip(&window) {
            *b = Complex::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let c = buf[k + 1];
            *a += c.norm_sqr();
        }
        segments_used += 1;
        start += step;
    }

    // One-sided normalization: 2 |X_k|^2 / (fs * sum w^2), except at the
    // Nyquist bin which has no mirror.
    let scale = 1.0 / (fs * window_power * segments_used as f64);
    let power: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let k = i + 1;
            let factor = if k == half { 1.0 } else { 2.0 };
            factor * a * scale
        })
        .collect();
    let frequencies: Vec<f64> = (1..=half).map(|k| k as f64 * fs / n as f64).collect();
    Ok(SpectrumEstimate {
        frequencies,
        power,
        segments_used,
        log_binned: false,
    })
}

/// Total power, the integral of the one-sided PSD over frequency.
pub fn total_power(spectrum: &SpectrumEstimate) -> f64 {
    if spectrum.frequencies.len() < 2 {
        return 0.0;
    }
    let df = spectrum.frequencies[1] - spectrum.frequencies[0];
    spectrum.power.iter().sum::<f64>() * df
}

/// Average the PSD into geometric frequency bins so low-frequency decades
/// are not out-voted by the dense high-frequency bins during fitting. Each
/// output point is the arithmetic mean of the member powers placed at the
/// geometric mean of the member frequencies; empty bins are dropped.
pub fn log_bin_spectrum(spectrum: &SpectrumEstimate, bins_per_decade: usize) -> SpectrumEstimate {
    assert!(bins_per_decade >= 1);
    let f_lo = spectrum.frequencies[0];
    let ratio = 10f64.powf(1.0 / bins_per_decade as f64);
    let mut frequencies = Vec::new();
    let mut power = Vec::new();
    let mut edge = f_lo;
    let mut i = 0usize;
    while i < spectrum.frequencies.len() {
        let next = edge * ratio;
        let mut log_f_acc = 0.0;
        let mut p_acc = 0.0;
        let mut count = 0usize;
        while i < spectrum.frequencies.len() && spectrum.frequencies[i] < next {
            log_f_acc += spectrum.frequencies[i].ln();
            p_acc += spectrum.power[i];
            count += 1;
            i += 1;
        }
        if count > 0 {
            frequencies.push((log_f_acc / count as f64).exp());
            power.push(p_acc / count as f64);
        }
        edge = next;
    }
    SpectrumEstimate {
        frequencies,
        power,
        segments_used: spectrum.segments_used,
        log_binned: true,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Positive decay exponent: y ~ x^(-exponent).
    pub exponent: f64,
    /// Natural-log intercept: ln y = intercept - exponent * ln x.
    pub intercept: f64,
    pub range: (f64, f64),
    pub stderr: f64,
    pub r2: f64,
}

/// Least squares of log y against log x over `range`; needs at least 5
/// points with positive ordinates inside the range.
pub fn fit_power_law(xs: &[f64], ys: &[f64], range: (f64, f64)) -> Result<PowerLawFit> {
    if !(range.0 < range.1) {
        return Err(Error::InvalidParameter {
            name: "range",
            value: range.0,
            constraint: "need lo < hi",
        });
    }
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (x, y) in xs.iter().zip(ys) {
        if *x >= range.0 && *x <= range.1 && *y > 0.0 {
            lx.push(x.ln());
            ly.push(y.ln());
        }
    }
    if lx.len() < 5 {
        return Err(Error::InsufficientData {
            required: 5,
            actual: lx.len(),
        });
    }
    let fit = stats::ols(&lx, &ly)?;
    Ok(PowerLawFit {
        exponent: -fit.slope,
        intercept: fit.intercept,
        range,
        stderr: fit.slope_stderr,
        r2: fit.r2,
    })
}

pub fn fit_spectrum(spectrum: &SpectrumEstimate, range: (f64, f64)) -> Result<PowerLawFit> {
    fit_power_law(&spectrum.frequencies, &spectrum.power, range)
}

/// Log-log slope fit of a duration histogram over `range`, reported as the
/// positive decay exponent. The first occupied bin is excluded to avoid
/// discretization bias, and empty bins are skipped.
pub fn fit_histogram_slope(hist: &LogHistogram, range: (f64, f64)) -> Result<PowerLawFit> {
    let centers = hist.centers();
    let first_occupied = hist
        .counts
        .iter()
        .position(|c| *c > 0)
        .ok_or(Error::EmptyInput("histogram has no counts"))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..hist.len() {
        if i == first_occupied || hist.counts[i] == 0 {
            continue;
        }
        xs.push(centers[i]);
        ys.push(hist.density[i]);
    }
    fit_power_law(&xs, &ys, range)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TwoRegimeFit {
    /// Low-frequency fit (beta_1 in the two-regime spectra).
    pub low_f: PowerLawFit,
    /// High-frequency fit (beta_2).
    pub high_f: PowerLawFit,
    pub f_break: f64,
    /// False when the two exponents agree within joint error, i.e. the
    /// spectrum does not support a break.
    pub break_reliable: bool,
}

/// Piecewise log-log fit with the break chosen on `break_grid` by total
/// squared residual. Each side needs at least 5 points.
pub fn fit_two_regime_psd(
    spectrum: &SpectrumEstimate,
    break_grid: &[f64],
) -> Result<TwoRegimeFit> {
    if break_grid.is_empty() {
        return Err(Error::EmptyInput("break_search_grid"));
    }
    let f = &spectrum.frequencies;
    if f.is_empty() {
        return Err(Error::EmptyInput("spectrum"));
    }
    let f_min = f[0];
    let f_max = *f.last().unwrap();
    let mut best: Option<(f64, f64, PowerLawFit, PowerLawFit)> = None;
    for &fb in break_grid {
        if !(fb > f_min && fb < f_max) {
            continue;
        }
        let low = fit_power_law(f, &spectrum.power, (f_min, fb));
        let high = fit_power_law(f, &spectrum.power, (fb, f_max));
        let (low, high) = match (low, high) {
            (Ok(l), Ok(h)) => (l, h),
            _ => continue,
        };
        let ssr = regime_ssr(spectrum, &low, &high, fb);
        if best.as_ref().map_or(true, |(s, ..)| ssr < *s) {
            best = Some((ssr, fb, low, high));
        }
    }
    let (_, f_break, low_f, high_f) = best.ok_or(Error::InvalidParameter {
        name: "break_search_grid",
        value: f64::NAN,
        constraint: "no grid point leaves >= 5 spectrum points on each side",
    })?;
    // Reliable only when the exponents separate beyond joint error AND by
    // a material amount (noiseless single-regime input has ~zero stderr).
    let joint = 2.0 * (low_f.stderr.powi(2) + high_f.stderr.powi(2)).sqrt();
    let separation = (low_f.exponent - high_f.exponent).abs();
    let break_reliable = separation > joint && separation > 0.05;
    Ok(TwoRegimeFit {
        low_f,
        high_f,
        f_break,
        break_reliable,
    })
}

fn regime_ssr(spectrum: &SpectrumEstimate, low: &PowerLawFit, high: &PowerLawFit, fb: f64) -> f64 {
    let mut ssr = 0.0;
    for (f, p) in spectrum.frequencies.iter().zip(&spectrum.power) {
        if !(*p > 0.0) {
            continue;
        }
        let fit = if *f <= fb { low } else { high };
        let pred = fit.intercept - fit.exponent * f.ln();
        let resid = p.ln() - pred;
        ssr += resid * resid;
    }
    ssr
}

/// Total squared log residual of a single power-law fit over the whole
/// spectrum (for nested-model comparisons against the two-regime fit).
pub fn single_regime_ssr(spectrum: &SpectrumEstimate, fit: &PowerLawFit) -> f64 {
    let mut ssr = 0.0;
    for (f, p) in spectrum.frequencies.iter().zip(&spectrum.power) {
        if !(*p > 0.0) {
            continue;
        }
        let pred = fit.intercept - fit.exponent * f.ln();
        let resid = p.ln() - pred;
        ssr += resid * resid;
    }
    ssr
}

pub fn two_regime_ssr(spectrum: &SpectrumEstimate, fit: &TwoRegimeFit) -> f64 {
    regime_ssr(spectrum, &fit.low_f, &fit.high_f, fit.f_break)
}

/// H = (beta - 1) / 2; the flag is false when the result falls outside the
/// (0, 1) range of a proper Hurst parameter.
pub fn hurst_from_beta(beta: f64) -> (f64, bool) {
    let h = (beta - 1.0) / 2.0;
    (h, h > 0.0 && h < 1.0)
}

/// Maximum-likelihood exponent of a truncated continuous power law on
/// [lo, hi]: density C t^(-alpha) with the closed-form normalization. The
/// standard error comes from the observed Fisher information and `r2` is
/// the squared correlation between empirical and model log-survival at the
/// sample points.
pub fn fit_duration_exponent_mle(durations: &[f64], lo: f64, hi: f64) -> Result<PowerLawFit> {
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::InvalidParameter {
            name: "lo",
            value: lo,
            constraint: "need 0 < lo < hi",
        });
    }
    let mut sample: Vec<f64> = durations
        .iter()
        .copied()
        .filter(|t| *t >= lo && *t <= hi)
        .collect();
    if sample.len() < 100 {
        return Err(Error::InsufficientData {
            required: 100,
            actual: sample.len(),
        });
    }
    let n = sample.len() as f64;
    let mean_ln: f64 = sample.iter().map(|t| t.ln()).sum::<f64>() / n;

    let log_norm = |alpha: f64| -> f64 {
        if (alpha - 1.0).abs() < 1e-9 {
            -((hi / lo).ln()).ln()
        } else {
            ((alpha - 1.0) / (lo.powf(1.0 - alpha) - hi.powf(1.0 - alpha))).ln()
        }
    };
    // Mean log-likelihood; concave in alpha (exponential family), so a
    // golden-section search is safe.
    let ell = |alpha: f64| log_norm(alpha) - alpha * mean_ln;

    let (mut a, mut b) = (0.05, 12.0);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = ell(c);
    let mut fd = ell(d);
    for _ in 0..200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = ell(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = ell(d);
        }
        if (b - a).abs() < 1e-10 {
            break;
        }
    }
    let alpha = 0.5 * (a + b);

    // Observed information from a central second difference of the mean
    // log-likelihood, scaled back to the full sample.
    let h = 1e-4;
    let second = (ell(alpha + h) - 2.0 * ell(alpha) + ell(alpha - h)) / (h * h);
    let info = -second * n;
    let stderr = if info > 0.0 { 1.0 / info.sqrt() } else { f64::INFINITY };

    // Goodness: correlation of empirical vs model log-survival.
    sample.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let model_survival = |t: f64| -> f64 {
        if (alpha - 1.0).abs() < 1e-9 {
            (hi / t).ln() / (hi / lo).ln()
        } else {
            (t.powf(1.0 - alpha) - hi.powf(1.0 - alpha))
                / (lo.powf(1.0 - alpha) - hi.powf(1.0 - alpha))
        }
    };
    let mut emp = Vec::new();
    let mut model = Vec::new();
    let total = sample.len();
    for (i, t) in sample.iter().enumerate().take(total - 1) {
        let s_emp = 1.0 - (i + 1) as f64 / total as f64;
        let s_mod = model_survival(*t);
        if s_emp > 0.0 && s_mod > 0.0 {
            emp.push(s_emp.ln());
            model.push(s_mod.ln());
        }
    }
    let r = stats::pearson(&emp, &model);

    Ok(PowerLawFit {
        exponent: alpha,
        intercept: log_norm(alpha),
        range: (lo, hi),
        stderr,
        r2: r * r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{simulate_fbm, FbmParams};
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn white_noise(n: usize, sigma: f64, seed: u64) -> UniformSeries {
        let mut rng = rng_from_seed(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        UniformSeries::new(0.0, 1.0, (0..n).map(|_| normal.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn sine_peak_lands_in_right_bin() {
        let f0 = 0.1;
        let n = 4096;
        let values: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64).sin())
            .collect();
        let s = UniformSeries::new(0.0, 1.0, values).unwrap();
        let spec = welch_psd(&s, 256, 0.5).unwrap();
        let peak = spec
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let df = spec.frequencies[1] - spec.frequencies[0];
        assert!(
            (spec.frequencies[peak] - f0).abs() <= df,
            "peak at {} not near {f0}",
            spec.frequencies[peak]
        );
    }

    #[test]
    fn white_noise_spectrum_is_flat() {
        let s = white_noise(1 << 20, 1.0, 8);
        let spec = welch_psd(&s, 1 << 14, 0.5).unwrap();
        let binned = log_bin_spectrum(&spec, 12);
        let fit = fit_spectrum(&binned, (1e-4, 1e-2)).unwrap();
        assert!(
            fit.exponent.abs() < 0.05,
            "white-noise slope {} not ~ 0",
            fit.exponent
        );
    }

    #[test]
    fn parseval_total_power_matches_variance() {
        let s = white_noise(1 << 18, 1.5, 9);
        let spec = welch_psd(&s, 1 << 12, 0.5).unwrap();
        let var = stats::sample_variance(s.values());
        let power = total_power(&spec);
        assert!(
            (power - var).abs() / var < 0.02,
            "total power {power} vs variance {var}"
        );
    }

    #[test]
    fn exact_power_law_recovered_to_machine_precision() {
        let frequencies: Vec<f64> = (1..2000).map(|i| i as f64 * 1e-3).collect();
        let power: Vec<f64> = frequencies.iter().map(|f| 2.5 * f.powf(-1.7)).collect();
        let spec = SpectrumEstimate {
            frequencies,
            power,
            segments_used: 1,
            log_binned: false,
        };
        let fit = fit_spectrum(&spec, (1e-3, 2.0)).unwrap();
        assert!((fit.exponent - 1.7).abs() < 1e-6);
        assert!((fit.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pareto_density_slope_recovered() {
        let mut rng = rng_from_seed(14);
        let durations: Vec<f64> = (0..200_000)
            .map(|_| rng.random::<f64>().max(1e-12).powf(-2.0))
            .collect();
        let hist = LogHistogram::from_values(&durations, 8).unwrap();
        let fit = fit_histogram_slope(&hist, (1.0, 1e3)).unwrap();
        assert!(
            (fit.exponent - 1.5).abs() < 0.05,
            "Pareto exponent {}",
            fit.exponent
        );
    }

    fn synthetic_two_regime(beta1: f64, beta2: f64, f_break: f64) -> SpectrumEstimate {
        let mut frequencies = Vec::new();
        let mut power = Vec::new();
        let mut f = 1e-5;
        while f < 0.5 {
            let p = if f <= f_break {
                f.powf(-beta1)
            } else {
                // Continuous at the break.
                f_break.powf(beta2 - beta1) * f.powf(-beta2)
            };
            frequencies.push(f);
            power.push(p);
            f *= 1.06;
        }
        SpectrumEstimate {
            frequencies,
            power,
            segments_used: 1,
            log_binned: true,
        }
    }

    fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
        let ratio = 10f64.powf(1.0 / per_decade as f64);
        let mut grid = vec![lo];
        while *grid.last().unwrap() < hi {
            let next = grid.last().unwrap() * ratio;
            grid.push(next);
        }
        grid
    }

    #[test]
    fn two_regime_recovers_construction() {
        for &(b1, b2) in &[(1.7, 0.8), (1.4, 0.5)] {
            let f_break = 1e-3;
            let spec = synthetic_two_regime(b1, b2, f_break);
            let grid = log_grid(1e-4, 1e-1, 8);
            let fit = fit_two_regime_psd(&spec, &grid).unwrap();
            assert!(
                (fit.low_f.exponent - b1).abs() < 0.05,
                "beta1 {} vs {b1}",
                fit.low_f.exponent
            );
            assert!(
                (fit.high_f.exponent - b2).abs() < 0.05,
                "beta2 {} vs {b2}",
                fit.high_f.exponent
            );
            let step = 10f64.powf(1.0 / 8.0);
            assert!(
                fit.f_break / f_break < step * 1.01 && f_break / fit.f_break < step * 1.01,
                "break {} vs {f_break}",
                fit.f_break
            );
            assert!(fit.break_reliable);
        }
    }

    #[test]
    fn single_regime_input_flags_unreliable_break() {
        let spec = synthetic_two_regime(1.2, 1.2, 1e-3);
        let grid = log_grid(1e-4, 1e-1, 8);
        let fit = fit_two_regime_psd(&spec, &grid).unwrap();
        assert!(
            (fit.low_f.exponent - fit.high_f.exponent).abs() < 0.05,
            "regimes should agree"
        );
        assert!(!fit.break_reliable);
    }

    #[test]
    fn two_regime_never_beats_single_regime_backwards() {
        // Nested models: the two-regime residual cannot exceed the
        // single-regime residual.
        let s = white_noise(1 << 16, 1.0, 10);
        let spec = log_bin_spectrum(&welch_psd(&s, 1 << 12, 0.5).unwrap(), 10);
        let f_min = spec.frequencies[0];
        let f_max = *spec.frequencies.last().unwrap();
        let single = fit_spectrum(&spec, (f_min, f_max)).unwrap();
        let grid = log_grid(f_min * 3.0, f_max / 3.0, 6);
        let two = fit_two_regime_psd(&spec, &grid).unwrap();
        assert!(two_regime_ssr(&spec, &two) <= single_regime_ssr(&spec, &single) + 1e-9);
    }

    #[test]
    fn hurst_map_values() {
        let (h, ok) = hurst_from_beta(1.7);
        assert!((h - 0.35).abs() < 1e-15 && ok);
        let (h, ok) = hurst_from_beta(2.0);
        assert!((h - 0.5).abs() < 1e-15 && ok);
        let (h, ok) = hurst_from_beta(1.4);
        assert!((h - 0.2).abs() < 1e-15 && ok);
        let (_, ok) = hurst_from_beta(0.5);
        assert!(!ok);
    }

    fn truncated_pareto(alpha: f64, lo: f64, hi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if (alpha - 1.0).abs() < 1e-12 {
                    lo * (hi / lo).powf(u)
                } else {
                    let a = lo.powf(1.0 - alpha);
                    let b = hi.powf(1.0 - alpha);
                    (a + u * (b - a)).powf(1.0 / (1.0 - alpha))
                }
            })
            .collect()
    }

    #[test]
    fn mle_recovers_truncated_pareto() {
        let sample = truncated_pareto(1.5, 1.0, 100.0, 100_000, 15);
        let fit = fit_duration_exponent_mle(&sample, 1.0, 100.0).unwrap();
        assert!(
            (fit.exponent - 1.5).abs() < 2.0 * fit.stderr + 0.01,
            "MLE {} +- {}",
            fit.exponent,
            fit.stderr
        );
        assert!(fit.r2 > 0.99, "survival-space goodness {}", fit.r2);
    }

    #[test]
    fn mle_separates_close_exponents() {
        // alpha = 1.65 must be rejected as 1.5 at the 1% level with 1e4
        // samples; repeated over seeds as a small power analysis.
        for seed in 0..5 {
            let sample = truncated_pareto(1.65, 1.0, 1e4, 10_000, 20 + seed);
            let fit = fit_duration_exponent_mle(&sample, 1.0, 1e4).unwrap();
            let z = (fit.exponent - 1.5) / fit.stderr;
            assert!(z > 2.576, "seed {seed}: z = {z} does not reject 1.5");
        }
    }

    #[test]
    fn mle_degenerate_range_errors() {
        let sample = truncated_pareto(1.5, 1.0, 100.0, 1000, 16);
        assert!(fit_duration_exponent_mle(&sample, 5.0, 5.0).is_err());
        assert!(fit_duration_exponent_mle(&sample, 99.99, 100.0).is_err());
    }

    #[test]
    fn mle_agrees_with_histogram_slope() {
        let sample = truncated_pareto(1.5, 1.0, 1e3, 200_000, 17);
        let mle = fit_duration_exponent_mle(&sample, 1.0, 1e3).unwrap();
        let hist = LogHistogram::from_values(&sample, 8).unwrap();
        let slope = fit_histogram_slope(&hist, (1.0, 1e3)).unwrap();
        let joint = 2.0 * (mle.stderr.powi(2) + slope.stderr.powi(2)).sqrt();
        assert!(
            (mle.exponent - slope.exponent).abs() < joint.max(0.05),
            "MLE {} vs histogram {}",
            mle.exponent,
            slope.exponent
        );
    }

    #[test]
    fn fbm_psd_slope_is_two_h_plus_one() {
        // H = 1/2: the random-walk spectrum has beta = 2. The full H grid
        // runs in the acceptance suite.
        let params = FbmParams::new(0.5, 1 << 19, 1.0, 1.0).unwrap();
        let path = simulate_fbm(&params, 30).unwrap();
        let spec = welch_psd(&path.series, 1 << 14, 0.5).unwrap();
        let binned = log_bin_spectrum(&spec, 10);
        let fit = fit_spectrum(&binned, (3e-4, 3e-2)).unwrap();
        assert!(
            (fit.exponent - 2.0).abs() < 0.1,
            "Wiener beta {} not ~ 2",
            fit.exponent
        );
    }
}
