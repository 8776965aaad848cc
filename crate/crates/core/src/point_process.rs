//! Quasi-Poisson event layer: generation of events from a stochastic rate
//! and the Anscombe-based activity-recovery pipeline (bin counts, forward
//! transform, moving average, exact unbiased inverse).

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::series::{EventStream, UniformSeries};

/// A(0) = 2 sqrt(3/8), the lower edge of the forward transform's range.
pub const ANSCOMBE_FLOOR: f64 = 1.2247448713915890;

/// Documented slack below the transform floor: inverse-transform inputs
/// above `ANSCOMBE_FLOOR - ANSCOMBE_EPS` are evaluated (and clipped at 0),
/// smaller values clamp to 0 and increment the warning counter.
pub const ANSCOMBE_EPS: f64 = 0.01;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoissonPipelineConfig {
    pub bin_seconds: f64,
    pub ma_window: usize,
}

impl Default for PoissonPipelineConfig {
    fn default() -> Self {
        Self {
            bin_seconds: 60.0,
            ma_window: 10,
        }
    }
}

impl PoissonPipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_seconds > 0.0) {
            return Err(Error::InvalidParameter {
                name: "bin_seconds",
                value: self.bin_seconds,
                constraint: "must be > 0",
            });
        }
        if self.ma_window < 1 {
            return Err(Error::InvalidParameter {
                name: "ma_window",
                value: self.ma_window as f64,
                constraint: "must be >= 1",
            });
        }
        Ok(())
    }
}

/// Piecewise-constant-rate Poisson process driven by `rate` (events per
/// second over the series' own grid). Within each sample's interval the
/// waiting times are exponential with mean 1/rate; the leftover exponential
/// budget carries across interval boundaries rescaled by the rate ratio, so
/// the construction is exact for the piecewise-constant rate. Expected
/// event count is sum(rate) * dt.
pub fn generate_events(rate: &UniformSeries, seed: u64) -> Result<EventStream> {
    if let Some(index) = rate.values().iter().position(|r| !(*r > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "rate",
            value: rate.values()[index],
            constraint: "all rate values must be > 0",
        });
    }
    let mut rng = rng_from_seed(seed);
    let dt = rate.dt();
    let mut events = Vec::new();
    // Remaining unit-exponential budget; an event fires when the integrated
    // rate consumes it.
    let mut budget: f64 = rng.sample(Exp1);
    for (i, &r) in rate.values().iter().enumerate() {
        let t_start = rate.t0() + i as f64 * dt;
        let mut remaining = dt;
        loop {
            let needed = budget / r;
            if needed <= remaining {
                remaining -= needed;
                events.push(t_start + (dt - remaining));
                budget = rng.sample(Exp1);
            } else {
                budget -= r * remaining;
                break;
            }
        }
    }
    EventStream::new(events)
}

/// Count events in half-open bins `[t_start + i b, t_start + (i+1) b)`.
/// The number of bins is `ceil((t_end - t_start) / b)`; events outside
/// `[t_start, t_end)` are ignored.
pub fn bin_counts(
    events: &EventStream,
    bin_seconds: f64,
    t_start: f64,
    t_end: f64,
) -> Result<UniformSeries> {
    if !(bin_seconds > 0.0) {
        return Err(Error::InvalidParameter {
            name: "bin_seconds",
            value: bin_seconds,
            constraint: "must be > 0",
        });
    }
    if !(t_start < t_end) {
        return Err(Error::InvalidParameter {
            name: "t_start",
            value: t_start,
            constraint: "t_start must be < t_end",
        });
    }
    let n_bins = ((t_end - t_start) / bin_seconds - 1e-12).ceil().max(1.0) as usize;
    let mut counts = vec![0.0; n_bins];
    for &t in events.timestamps() {
        if t < t_start || t >= t_end {
            continue;
        }
        let idx = (((t - t_start) / bin_seconds).floor() as usize).min(n_bins - 1);
        counts[idx] += 1.0;
    }
    UniformSeries::new(t_start, bin_seconds, counts)
}

/// Forward Anscombe transform A(x) = 2 sqrt(x + 3/8), mapping Poisson
/// counts to approximately unit-variance data.
pub fn anscombe_forward(counts: &UniformSeries) -> Result<UniformSeries> {
    if let Some(index) = counts.values().iter().position(|v| *v < 0.0) {
        return Err(Error::InvalidParameter {
            name: "counts",
            value: counts.values()[index],
            constraint: "Anscombe forward input must be >= 0",
        });
    }
    let out: Vec<f64> = counts
        .values()
        .iter()
        .map(|x| 2.0 * (x + 0.375).sqrt())
        .collect();
    UniformSeries::new(counts.t0(), counts.dt(), out)
}

/// Closed-form approximation of the exact unbiased inverse Anscombe
/// transform. Inputs below `ANSCOMBE_FLOOR - ANSCOMBE_EPS` clamp to 0 and
/// are counted; negative evaluations clip to 0.
pub fn anscombe_inverse_unbiased(d: &UniformSeries) -> Result<(UniformSeries, usize)> {
    let sqrt32 = (1.5_f64).sqrt();
    let mut clamped = 0usize;
    let out: Vec<f64> = d
        .values()
        .iter()
        .map(|&v| {
            if v < ANSCOMBE_FLOOR - ANSCOMBE_EPS {
                clamped += 1;
                0.0
            } else {
                let x = 0.25 * v * v + 0.25 * sqrt32 / v - 1.375 / (v * v)
                    + 0.625 * sqrt32 / (v * v * v)
                    - 0.125;
                x.max(0.0)
            }
        })
        .collect();
    Ok((UniformSeries::new(d.t0(), d.dt(), out)?, clamped))
}

/// Naive algebraic inverse (D/2)^2 - 3/8, kept for bias comparisons.
pub fn anscombe_inverse_naive(d: f64) -> f64 {
    0.25 * d * d - 0.375
}

#[derive(Debug, Clone)]
pub struct DenoisedActivity {
    /// Recovered activity in counts per bin.
    pub activity: UniformSeries,
    /// Inverse-transform inputs that fell below the transform's range.
    pub clamped: usize,
}

/// The activity-recovery pipeline: bin counts over `bin_seconds`, forward
/// Anscombe, moving average over `ma_window` bins, exact unbiased inverse.
/// Bins are anchored to the absolute grid `floor(t / bin) * bin`, so
/// shifting the events by an integer number of bins shifts the output by
/// the same number of samples; the trailing partial bin is dropped.
pub fn denoise_activity(
    events: &EventStream,
    cfg: &PoissonPipelineConfig,
) -> Result<DenoisedActivity> {
    if events.is_empty() {
        return Err(Error::EmptyInput(
            "denoise_activity needs events (use denoise_activity_over for an explicit range)",
        ));
    }
    let first = events.timestamps()[0];
    let last = *events.timestamps().last().unwrap();
    let t_start = (first / cfg.bin_seconds).floor() * cfg.bin_seconds;
    let full_bins = ((last - t_start) / cfg.bin_seconds).floor();
    let t_end = t_start + full_bins.max(1.0) * cfg.bin_seconds;
    denoise_activity_over(events, cfg, t_start, t_end)
}

/// [`denoise_activity`] over an explicit half-open time range (also valid
/// for an empty stream, which recovers activity 0 everywhere).
pub fn denoise_activity_over(
    events: &EventStream,
    cfg: &PoissonPipelineConfig,
    t_start: f64,
    t_end: f64,
) -> Result<DenoisedActivity> {
    cfg.validate()?;
    let counts = bin_counts(events, cfg.bin_seconds, t_start, t_end)?;
    if counts.len() < cfg.ma_window {
        return Err(Error::SeriesTooShort {
            required: cfg.ma_window,
            actual: counts.len(),
        });
    }
    let transformed = anscombe_forward(&counts)?;
    let smoothed = transformed.moving_average(cfg.ma_window)?;
    let (activity, clamped) = anscombe_inverse_unbiased(&smoothed)?;
    Ok(DenoisedActivity { activity, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stats;
    use rand_distr::{Distribution, Poisson};

    fn constant_rate(rate_hz: f64, dt: f64, n: usize) -> UniformSeries {
        UniformSeries::new(0.0, dt, vec![rate_hz; n]).unwrap()
    }

    #[test]
    fn constant_rate_event_count_is_poisson() {
        let rate = constant_rate(1.0, 100.0, 1000); // 1e5 seconds at 1 Hz
        let events = generate_events(&rate, 42).unwrap();
        let n = events.len() as f64;
        let expected = 1e5;
        assert!(
            (n - expected).abs() < 3.0 * expected.sqrt(),
            "count {n} too far from {expected}"
        );
    }

    #[test]
    fn inter_event_times_are_exponential() {
        let r = 2.0;
        let rate = constant_rate(r, 100.0, 100);
        let events = generate_events(&rate, 7).unwrap();
        let gaps: Vec<f64> = events.timestamps().windows(2).map(|w| w[1] - w[0]).collect();
        let d = stats::ks_one_sample(&gaps, |t| 1.0 - (-r * t).exp());
        let crit = stats::ks_one_sample_critical(gaps.len(), 0.01);
        assert!(d < crit, "exponential KS {d} vs critical {crit}");
    }

    #[test]
    fn doubling_rate_halves_mean_gap() {
        let mean_gap = |r: f64, seed: u64| {
            let rate = constant_rate(r, 100.0, 500);
            let events = generate_events(&rate, seed).unwrap();
            let gaps: Vec<f64> = events.timestamps().windows(2).map(|w| w[1] - w[0]).collect();
            stats::mean(&gaps)
        };
        let g1 = mean_gap(1.0, 3);
        let g2 = mean_gap(2.0, 4);
        assert!(
            (g1 / g2 - 2.0).abs() < 0.04,
            "gap ratio {} not ~ 2",
            g1 / g2
        );
    }

    #[test]
    fn nonpositive_rate_rejected() {
        let rate = UniformSeries::new(0.0, 1.0, vec![1.0, 0.0, 2.0]).unwrap();
        assert!(generate_events(&rate, 1).is_err());
    }

    #[test]
    fn bin_counts_hand_case() {
        let events = EventStream::new(vec![0.5, 1.5, 1.6]).unwrap();
        let bins = bin_counts(&events, 1.0, 0.0, 2.0).unwrap();
        assert_eq!(bins.values(), &[1.0, 2.0]);
    }

    #[test]
    fn bin_counts_empty_stream_is_zeros() {
        let bins = bin_counts(&EventStream::empty(), 1.0, 0.0, 4.0).unwrap();
        assert_eq!(bins.values(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn bin_counts_conserve_in_range_events() {
        let mut rng = rng_from_seed(5);
        let mut times = Vec::new();
        let mut t = 0.0;
        for _ in 0..500 {
            t += rng.random::<f64>() * 2.0 + 1e-4;
            times.push(t);
        }
        let events = EventStream::new(times.clone()).unwrap();
        let (lo, hi) = (10.0, 400.0);
        let bins = bin_counts(&events, 7.0, lo, hi).unwrap();
        let total: f64 = bins.values().iter().sum();
        let in_range = times.iter().filter(|t| **t >= lo && **t < hi).count();
        assert_eq!(total as usize, in_range);
    }

    #[test]
    fn anscombe_forward_values() {
        let s = UniformSeries::new(0.0, 1.0, vec![0.0, 13.0]).unwrap();
        let a = anscombe_forward(&s).unwrap();
        assert!((a.values()[0] - 1.2247448713915890).abs() < 1e-12);
        assert!((a.values()[1] - 7.3143694191638967).abs() < 1e-12);
        // Monotone.
        let s = UniformSeries::new(0.0, 1.0, (0..100).map(|i| i as f64).collect()).unwrap();
        let a = anscombe_forward(&s).unwrap();
        for w in a.values().windows(2) {
            assert!(w[1] > w[0]);
        }
        let neg = UniformSeries::new(0.0, 1.0, vec![-1.0]).unwrap();
        assert!(anscombe_forward(&neg).is_err());
    }

    #[test]
    fn inverse_is_unbiased_at_rate_twenty() {
        let mut rng = rng_from_seed(9);
        let poi = Poisson::new(20.0).unwrap();
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let x: f64 = poi.sample(&mut rng);
            acc += 2.0 * (x + 0.375).sqrt();
        }
        let mean_d = acc / n as f64;
        let s = UniformSeries::new(0.0, 1.0, vec![mean_d]).unwrap();
        let (inv, clamped) = anscombe_inverse_unbiased(&s).unwrap();
        assert_eq!(clamped, 0);
        let recovered = inv.values()[0];
        assert!(
            (recovered - 20.0).abs() / 20.0 < 0.01,
            "unbiased inverse of mean transform: {recovered}"
        );
    }

    #[test]
    fn inverse_matches_forward_at_large_values() {
        let x = 1e4;
        let d = 2.0 * (x + 0.375_f64).sqrt();
        let s = UniformSeries::new(0.0, 1.0, vec![d]).unwrap();
        let (inv, _) = anscombe_inverse_unbiased(&s).unwrap();
        assert!(
            (inv.values()[0] - x).abs() / x < 1e-3,
            "large-x inverse {} vs {x}",
            inv.values()[0]
        );
    }

    #[test]
    fn unbiased_inverse_beats_naive_at_low_rate() {
        let mu = 5.0;
        let mut rng = rng_from_seed(10);
        let poi = Poisson::new(mu).unwrap();
        let n = 500_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let x: f64 = poi.sample(&mut rng);
            acc += 2.0 * (x + 0.375).sqrt();
        }
        let mean_d = acc / n as f64;
        let s = UniformSeries::new(0.0, 1.0, vec![mean_d]).unwrap();
        let (inv, _) = anscombe_inverse_unbiased(&s).unwrap();
        let unbiased_err = (inv.values()[0] - mu).abs();
        let naive_err = (anscombe_inverse_naive(mean_d) - mu).abs();
        assert!(
            unbiased_err < naive_err,
            "unbiased {unbiased_err} vs naive {naive_err}"
        );
    }

    #[test]
    fn variance_stabilization_holds_from_mu_four() {
        let mut rng = rng_from_seed(11);
        for &mu in &[4.0, 5.0, 10.0, 20.0, 50.0, 100.0] {
            let poi = Poisson::new(mu).unwrap();
            let transformed: Vec<f64> = (0..100_000)
                .map(|_| {
                    let x: f64 = poi.sample(&mut rng);
                    2.0 * (x + 0.375).sqrt()
                })
                .collect();
            let var = stats::sample_variance(&transformed);
            assert!(
                (0.9..=1.1).contains(&var),
                "variance {var} at mu = {mu} outside [0.9, 1.1]"
            );
        }
    }

    #[test]
    fn denoise_recovers_constant_rate() {
        // 5 events per 60 s bin on average.
        let cfg = PoissonPipelineConfig::default();
        let rate = constant_rate(5.0 / 60.0, 60.0, 20_000);
        let events = generate_events(&rate, 13).unwrap();
        let out = denoise_activity(&events, &cfg).unwrap();
        let m = stats::mean(out.activity.values());
        assert!(
            (m - 5.0).abs() / 5.0 < 0.02,
            "recovered mean {m} not within 2% of 5"
        );
    }

    #[test]
    fn denoise_of_empty_stream_is_zero() {
        let cfg = PoissonPipelineConfig::default();
        let out = denoise_activity_over(&EventStream::empty(), &cfg, 0.0, 1200.0).unwrap();
        for v in out.activity.values() {
            // The closed-form inverse of A(0) leaves only rounding residue.
            assert!(v.abs() < 1e-12, "empty stream must recover the clamp floor, got {v}");
        }
    }

    #[test]
    fn denoise_commutes_with_bin_shift() {
        let cfg = PoissonPipelineConfig::default();
        let rate = constant_rate(0.1, 60.0, 400);
        let events = generate_events(&rate, 17).unwrap();
        let base = denoise_activity(&events, &cfg).unwrap();
        let shifted_events = events.shifted(5.0 * cfg.bin_seconds).unwrap();
        let shifted = denoise_activity(&shifted_events, &cfg).unwrap();
        assert_eq!(base.activity.values(), shifted.activity.values());
        assert!(
            (shifted.activity.t0() - base.activity.t0() - 5.0 * cfg.bin_seconds).abs() < 1e-9
        );
    }

    #[test]
    fn ensemble_mean_counts_recover_rate() {
        // 20 bins with different rates; 100 seeds; per-bin ensemble mean
        // within 1% of rate * dt.
        let dt = 60.0;
        let values: Vec<f64> = (0..20).map(|i| 0.3 + 0.05 * i as f64).collect();
        let rate = UniformSeries::new(0.0, dt, values.clone()).unwrap();
        let n_seeds = 100;
        let mut sums = vec![0.0; 20];
        for seed in 0..n_seeds {
            let events = generate_events(&rate, 1000 + seed).unwrap();
            let bins = bin_counts(&events, dt, 0.0, 20.0 * dt).unwrap();
            for (acc, v) in sums.iter_mut().zip(bins.values()) {
                *acc += v;
            }
        }
        for (i, acc) in sums.iter().enumerate() {
            let mean = acc / n_seeds as f64;
            let expected = values[i] * dt;
            assert!(
                (mean - expected).abs() / expected < 0.01 + 3.0 / (n_seeds as f64 * expected).sqrt(),
                "bin {i}: ensemble mean {mean} vs {expected}"
            );
        }
    }

    #[test]
    fn denoised_activity_tracks_sde_rate() {
        use crate::sde::{simulate_sde, SdeParams};
        // Slowly varying SDE state mapped to counts per bin (clamped to
        // [1, 100]), driving a quasi-Poisson stream; the recovered activity
        // must correlate strongly with the true expected counts.
        let mut p = SdeParams::standard(2.5, 3.0);
        p.kappa = 0.05;
        let n_bins = 8000usize;
        // One 60 s bin advances the driving state by 2e-4 natural time
        // units, so the activity varies slowly across the 10-bin smoothing
        // window of the recovery pipeline. The 5x gain with saturation at
        // 100 counts/bin keeps the Poisson noise small relative to the
        // signal and caps the fast deep-tail excursions.
        let natural = simulate_sde(&p, n_bins as f64 * 2e-4, 2e-4, 23).unwrap();
        let bin = 60.0;
        let expected_counts: Vec<f64> =
            natural.values().iter().map(|x| (5.0 * x).clamp(1.0, 100.0)).collect();
        let rate = UniformSeries::new(
            0.0,
            bin,
            expected_counts.iter().map(|c| c / bin).collect(),
        )
        .unwrap();
        let events = generate_events(&rate, 29).unwrap();
        let cfg = PoissonPipelineConfig::default();
        let out = denoise_activity_over(&events, &cfg, 0.0, n_bins as f64 * bin).unwrap();
        let n = out.activity.len();
        // Center-aligned comparison: the causal moving average lags the
        // truth by half its window.
        let half = cfg.ma_window / 2;
        let corr = stats::pearson(out.activity.values(), &expected_counts[half..half + n]);
        assert!(corr > 0.9, "activity/rate correlation {corr}");
    }
}
