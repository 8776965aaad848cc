//! Fundamental series types and filtering primitives.
//!
//! `UniformSeries` is the common currency of all pipelines: a uniformly
//! sampled real signal with a start time `t0` (epoch seconds) and a sampling
//! interval `dt`. `PriceSeries` specializes it to positive asset prices and
//! `EventStream` holds strictly increasing event timestamps.
//!
//! All filters here use left-aligned (causal) windows: output sample `i` is
//! computed from input samples `[i, i + window)`, the output keeps the input
//! `t0`, and the length shrinks to `len - window + 1`. A live filter could
//! produce the same stream sample by sample.

use crate::error::{Error, Result};
use crate::stats;

/// Uniformly sampled real-valued signal. Sample `i` is taken at
/// `t0 + i * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl UniformSeries {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: dt,
                constraint: "dt must be finite and > 0, t0 finite",
            });
        }
        if values.is_empty() {
            return Err(Error::EmptyInput("series values"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { t0, dt, values })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Non-overlapping sums of `m` consecutive samples; the trailing
    /// remainder shorter than `m` is dropped. Output `dt` is `m * dt`.
    pub fn aggregate_returns(&self, m: usize) -> Result<UniformSeries> {
        if m < 1 {
            return Err(Error::InvalidParameter {
                name: "m",
                value: m as f64,
                constraint: "aggregation factor must be >= 1",
            });
        }
        if self.len() < m {
            return Err(Error::SeriesTooShort {
                required: m,
                actual: self.len(),
            });
        }
        let sums: Vec<f64> = self
            .values
            .chunks_exact(m)
            .map(|chunk| chunk.iter().sum())
            .collect();
        UniformSeries::new(self.t0, self.dt * m as f64, sums)
    }

    /// Left-aligned rolling sample standard deviation (divisor `window - 1`)
    /// over `[i, i + window)`. Output length is `len - window + 1` and `t0`
    /// is unchanged: sample `i` of the output describes the window starting
    /// at input time `t0 + i * dt`.
    pub fn rolling_std(&self, window: usize) -> Result<UniformSeries> {
        if window < 2 || window > self.len() {
            return Err(Error::WindowOutOfRange {
                window,
                len: self.len(),
            });
        }
        // Prefix sums on globally centered data keep the cancellation in
        // sum(x^2) - sum(x)^2/w benign for series with large means.
        let center = stats::mean(&self.values);
        let n = self.len();
        let mut s1 = vec![0.0; n + 1];
        let mut s2 = vec![0.0; n + 1];
        for (i, v) in self.values.iter().enumerate() {
            let d = v - center;
            s1[i + 1] = s1[i] + d;
            s2[i + 1] = s2[i] + d * d;
        }
        let w = window as f64;
        let out: Vec<f64> = (0..n - window + 1)
            .map(|i| {
                let sum = s1[i + window] - s1[i];
                let sumsq = s2[i + window] - s2[i];
                let var = (sumsq - sum * sum / w) / (w - 1.0);
                var.max(0.0).sqrt()
            })
            .collect();
        UniformSeries::new(self.t0, self.dt, out)
    }

    /// Left-aligned moving average over `[i, i + window)`; same alignment
    /// and length conventions as [`rolling_std`](Self::rolling_std).
    pub fn moving_average(&self, window: usize) -> Result<UniformSeries> {
        if window < 1 || window > self.len() {
            return Err(Error::WindowOutOfRange {
                window,
                len: self.len(),
            });
        }
        let n = self.len();
        let mut prefix = vec![0.0; n + 1];
        for (i, v) in self.values.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v;
        }
        let w = window as f64;
        let out: Vec<f64> = (0..n - window + 1)
            .map(|i| (prefix[i + window] - prefix[i]) / w)
            .collect();
        UniformSeries::new(self.t0, self.dt, out)
    }

    /// Scale the series to unit standard deviation and return the scale used.
    ///
    /// The mean is NOT subtracted anywhere: the scale is the uncentered
    /// second moment about zero, `sqrt(mean(x^2))` (divisor `n`). Activity
    /// and volatility series are positive magnitudes, and thresholds are
    /// taken on this positive unit scale.
    pub fn normalize_unit_std(&self) -> Result<(UniformSeries, f64)> {
        let scale = stats::rms(&self.values);
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::ZeroVariance);
        }
        let out: Vec<f64> = self.values.iter().map(|v| v / scale).collect();
        Ok((UniformSeries::new(self.t0, self.dt, out)?, scale))
    }
}

/// Uniformly sampled positive asset price series.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    t0: f64,
    dt: f64,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(t0: f64, dt: f64, prices: Vec<f64>) -> Result<Self> {
        if let Some(index) = prices.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::NonPositivePrice {
                index,
                value: prices[index],
            });
        }
        let series = UniformSeries::new(t0, dt, prices)?;
        Ok(Self {
            t0: series.t0,
            dt: series.dt,
            prices: series.values,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Overlapping (stride 1) log returns over `delta_steps` samples:
    /// value `i` is `ln(S(t_i + delta) / S(t_i))` with
    /// `delta = delta_steps * dt`. Output `dt` equals the input `dt` and the
    /// length shrinks by `delta_steps`. Use
    /// [`UniformSeries::aggregate_returns`] for the non-overlapping view at
    /// a coarser interval.
    pub fn log_returns(&self, delta_steps: usize) -> Result<UniformSeries> {
        if delta_steps < 1 {
            return Err(Error::InvalidParameter {
                name: "delta_steps",
                value: delta_steps as f64,
                constraint: "must be >= 1",
            });
        }
        if self.len() <= delta_steps {
            return Err(Error::SeriesTooShort {
                required: delta_steps + 1,
                actual: self.len(),
            });
        }
        let returns: Vec<f64> = self
            .prices
            .windows(delta_steps + 1)
            .map(|w| (w[delta_steps] / w[0]).ln())
            .collect();
        UniformSeries::new(self.t0, self.dt, returns)
    }
}

/// Strictly increasing event timestamps (epoch seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    timestamps: Vec<f64>,
}

impl EventStream {
    pub fn new(timestamps: Vec<f64>) -> Result<Self> {
        if let Some(index) = timestamps.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(index) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotonicTimestamps { index: index + 1 });
        }
        Ok(Self { timestamps })
    }

    pub fn empty() -> Self {
        Self { timestamps: Vec::new() }
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Shift every timestamp by `offset` seconds.
    pub fn shifted(&self, offset: f64) -> Result<EventStream> {
        EventStream::new(self.timestamps.iter().map(|t| t + offset).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, Normal};

    fn series(values: &[f64]) -> UniformSeries {
        UniformSeries::new(0.0, 1.0, values.to_vec()).unwrap()
    }

    #[test]
    fn log_returns_single_step() {
        let p = PriceSeries::new(0.0, 1.0, vec![100.0, 101.0]).unwrap();
        let r = p.log_returns(1).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.values()[0] - 0.0099503308531680828).abs() < 1e-15);
    }

    #[test]
    fn log_returns_constant_prices_are_zero() {
        let p = PriceSeries::new(0.0, 1.0, vec![5.0, 5.0, 5.0]).unwrap();
        let r = p.log_returns(1).unwrap();
        assert_eq!(r.values(), &[0.0, 0.0]);
    }

    #[test]
    fn log_returns_two_step_exponentials() {
        let e = std::f64::consts::E;
        let p = PriceSeries::new(0.0, 1.0, vec![1.0, e, e * e]).unwrap();
        let r = p.log_returns(2).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.values()[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn log_returns_too_short_errors() {
        let p = PriceSeries::new(0.0, 1.0, vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            p.log_returns(2),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn non_positive_price_rejected() {
        assert!(matches!(
            PriceSeries::new(0.0, 1.0, vec![1.0, 0.0]),
            Err(Error::NonPositivePrice { index: 1, .. })
        ));
    }

    #[test]
    fn aggregate_hand_sum() {
        let r = series(&[1.0, 2.0, 3.0, 4.0]);
        let a = r.aggregate_returns(2).unwrap();
        assert_eq!(a.values(), &[3.0, 7.0]);
        assert_eq!(a.dt(), 2.0);
    }

    #[test]
    fn aggregate_m1_is_identity() {
        let r = series(&[1.5, -0.5, 2.0]);
        let a = r.aggregate_returns(1).unwrap();
        assert_eq!(a.values(), r.values());
        assert_eq!(a.dt(), r.dt());
    }

    #[test]
    fn aggregate_telescopes_to_coarse_log_returns() {
        let mut rng = rng_from_seed(11);
        let normal = Normal::new(0.0, 0.01).unwrap();
        let mut prices = vec![100.0];
        for _ in 0..30 {
            let r: f64 = normal.sample(&mut rng);
            let last = *prices.last().unwrap();
            prices.push(last * r.exp());
        }
        let p = PriceSeries::new(0.0, 1.0, prices).unwrap();
        let m = 5;
        let fine = p.log_returns(1).unwrap();
        let agg = fine.aggregate_returns(m).unwrap();
        let coarse = p.log_returns(m).unwrap();
        for (j, v) in agg.values().iter().enumerate() {
            let direct = coarse.values()[j * m];
            assert!((v - direct).abs() < 1e-12, "telescoping mismatch at {j}");
        }
    }

    #[test]
    fn rolling_std_constant_is_zero() {
        let s = series(&[1.0, 1.0, 1.0, 1.0]);
        let out = s.rolling_std(2).unwrap();
        assert_eq!(out.values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn rolling_std_alternating_pairs() {
        let s = series(&[0.0, 2.0, 0.0, 2.0]);
        let out = s.rolling_std(2).unwrap();
        let sqrt2 = 2.0_f64.sqrt();
        for v in out.values() {
            assert!((v - sqrt2).abs() < 1e-12);
        }
    }

    #[test]
    fn rolling_std_recovers_noise_scale() {
        let sigma = 0.7;
        let mut rng = rng_from_seed(5);
        let normal = Normal::new(0.0, sigma).unwrap();
        let values: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
        let s = UniformSeries::new(0.0, 1.0, values).unwrap();
        let out = s.rolling_std(10).unwrap();
        let m = stats::mean(out.values());
        // E[sample std] of 10 Gaussians is c4(10) * sigma ~ 0.9727 sigma,
        // well within the 5% tolerance.
        assert!(
            (m - sigma).abs() / sigma < 0.05,
            "rolling std mean {m} vs sigma {sigma}"
        );
    }

    #[test]
    fn rolling_std_window_out_of_range() {
        let s = series(&[1.0, 2.0]);
        assert!(matches!(s.rolling_std(1), Err(Error::WindowOutOfRange { .. })));
        assert!(matches!(s.rolling_std(3), Err(Error::WindowOutOfRange { .. })));
    }

    #[test]
    fn moving_average_hand_cases() {
        let s = series(&[1.0, 2.0, 3.0]);
        assert_eq!(s.moving_average(3).unwrap().values(), &[2.0]);
        assert_eq!(s.moving_average(1).unwrap().values(), s.values());
    }

    #[test]
    fn moving_average_step_ramp() {
        let mut v = vec![0.0; 10];
        v.extend(vec![1.0; 10]);
        let s = series(&v);
        let out = s.moving_average(10).unwrap();
        assert_eq!(out.len(), 11);
        for (i, v) in out.values().iter().enumerate() {
            assert!((v - i as f64 * 0.1).abs() < 1e-12, "ramp at {i}: {v}");
        }
    }

    #[test]
    fn normalize_divides_by_uncentered_scale() {
        let s = series(&[0.0, 2.0]);
        let (out, scale) = s.normalize_unit_std().unwrap();
        assert!((scale - 2.0_f64.sqrt()).abs() < 1e-15);
        assert!((out.values()[1] - 2.0 / 2.0_f64.sqrt()).abs() < 1e-15);
        assert_eq!(out.values()[0], 0.0);
    }

    #[test]
    fn normalize_unit_input_unchanged() {
        let s = series(&[1.0, -1.0, 1.0, -1.0]);
        let (out, scale) = s.normalize_unit_std().unwrap();
        assert!((scale - 1.0).abs() < 1e-15);
        assert_eq!(out.values(), s.values());
    }

    #[test]
    fn normalize_zero_series_errors() {
        let s = series(&[0.0, 0.0, 0.0]);
        assert!(matches!(s.normalize_unit_std(), Err(Error::ZeroVariance)));
    }

    #[test]
    fn event_stream_requires_strict_monotonicity() {
        assert!(EventStream::new(vec![1.0, 2.0, 2.0]).is_err());
        assert!(EventStream::new(vec![1.0, 0.5]).is_err());
        assert!(EventStream::new(vec![1.0, 2.0, 3.0]).is_ok());
    }
}
