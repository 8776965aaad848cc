//! Nonlinear SDE engine: simulation of the multiplicative-noise class
//!
//! ```text
//! dx = (eta - lambda/2) x^(2 eta - 1) dt + x^eta dW
//! ```
//!
//! on a reflecting domain [x_min, x_max], its closed-form stationary density
//! and spectral exponents, the transition-density scaling check, and the
//! synthetic return generator driven by the simulated state.
//!
//! Integration uses Euler-Maruyama with a state-dependent internal step
//! `dt_i = kappa^2 x^(-2(eta-1))`, which keeps the per-step relative
//! diffusion at `kappa` uniformly in `x` (fixed steps are unstable for
//! eta > 1 at large x). With this step the update reduces to
//! `x <- x (1 + (eta - lambda/2) kappa^2 + kappa xi)`, so `kappa` is both
//! the step-precision constant and the per-step relative resolution of the
//! path. Reflection is fold-back: `x -> 2 b - x` at a boundary `b`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::passage::LogHistogram;
use crate::rng::{child_rng, rng_from_seed, SimRng};
use crate::series::UniformSeries;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SdeParams {
    /// Exponent of noise multiplicativity, > 1.
    pub eta: f64,
    /// Exponent of the stationary power-law density, > 1.
    pub lambda: f64,
    pub x_min: f64,
    pub x_max: f64,
    /// Step-precision constant in (0, 1]: per-step relative diffusion.
    pub kappa: f64,
    /// Initial state in (x_min, x_max].
    pub x0: f64,
}

pub const DEFAULT_KAPPA: f64 = 0.1;
pub const DEFAULT_X_MIN: f64 = 1.0;
pub const DEFAULT_X_MAX: f64 = 1e3;

impl SdeParams {
    /// Desk-scale defaults: x in [1, 1e3], kappa = 0.1, started at the
    /// geometric midpoint of the domain.
    pub fn standard(eta: f64, lambda: f64) -> Self {
        Self {
            eta,
            lambda,
            x_min: DEFAULT_X_MIN,
            x_max: DEFAULT_X_MAX,
            kappa: DEFAULT_KAPPA,
            x0: (DEFAULT_X_MIN * DEFAULT_X_MAX).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 1.0) {
            return Err(Error::InvalidParameter {
                name: "eta",
                value: self.eta,
                constraint: "must be > 1",
            });
        }
        if !(self.lambda > 1.0) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: self.lambda,
                constraint: "must be > 1",
            });
        }
        if !(self.x_min > 0.0 && self.x_max > self.x_min) {
            return Err(Error::InvalidParameter {
                name: "x_min",
                value: self.x_min,
                constraint: "need 0 < x_min < x_max",
            });
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "kappa",
                value: self.kappa,
                constraint: "must be in (0, 1]",
            });
        }
        if !(self.x0 > self.x_min && self.x0 <= self.x_max) {
            return Err(Error::InvalidParameter {
                name: "x0",
                value: self.x0,
                constraint: "must be in (x_min, x_max]",
            });
        }
        Ok(())
    }
}

/// One Euler-Maruyama step at the adaptive internal step size.
struct Stepper {
    drift_factor: f64, // (eta - lambda/2) kappa^2
    kappa: f64,
    kappa2: f64,
    x_min: f64,
    x_max: f64,
    /// -2 (eta - 1), the exponent of the internal step size.
    time_exp: f64,
    /// Fast path when the exponent is an integer (covers eta = 2, 5/2, 3).
    time_exp_int: Option<i32>,
    steps: u64,
    touched_boundary: bool,
}

impl Stepper {
    fn new(p: &SdeParams) -> Self {
        let time_exp = -2.0 * (p.eta - 1.0);
        let rounded = time_exp.round();
        let time_exp_int = if (time_exp - rounded).abs() < 1e-12 {
            Some(rounded as i32)
        } else {
            None
        };
        Self {
            drift_factor: (p.eta - 0.5 * p.lambda) * p.kappa * p.kappa,
            kappa: p.kappa,
            kappa2: p.kappa * p.kappa,
            x_min: p.x_min,
            x_max: p.x_max,
            time_exp,
            time_exp_int,
            steps: 0,
            touched_boundary: false,
        }
    }

    #[inline]
    fn internal_dt(&self, x: f64) -> f64 {
        match self.time_exp_int {
            Some(k) => self.kappa2 * x.powi(k),
            None => self.kappa2 * x.powf(self.time_exp),
        }
    }

    /// Advance the state by one internal step with noise `xi`; returns the
    /// time consumed (computed from the pre-step state).
    #[inline]
    fn step_with_noise(&mut self, x: &mut f64, xi: f64) -> Result<f64> {
        let dt = self.internal_dt(*x);
        let mut xn = *x * (1.0 + self.drift_factor + self.kappa * xi);
        if !xn.is_finite() {
            return Err(Error::NonFiniteState { step: self.steps });
        }
        let mut folds = 0;
        while xn < self.x_min || xn > self.x_max {
            if xn < self.x_min {
                xn = 2.0 * self.x_min - xn;
            } else {
                xn = 2.0 * self.x_max - xn;
            }
            self.touched_boundary = true;
            folds += 1;
            if folds > 64 {
                return Err(Error::NonFiniteState { step: self.steps });
            }
        }
        debug_assert!(xn >= self.x_min && xn <= self.x_max);
        *x = xn;
        self.steps += 1;
        Ok(dt)
    }

    #[inline]
    fn step(&mut self, x: &mut f64, rng: &mut SimRng) -> Result<f64> {
        let xi: f64 = rng.sample(StandardNormal);
        self.step_with_noise(x, xi)
    }
}

/// Simulate the SDE and record the state on a uniform `dt_out` grid by
/// sample-and-hold: output sample `i` is the internal state at the first
/// internal step reaching past `(i + 1) * dt_out`. Identical `(params,
/// seed)` produce identical output within one build.
pub fn simulate_sde(
    params: &SdeParams,
    duration: f64,
    dt_out: f64,
    seed: u64,
) -> Result<UniformSeries> {
    params.validate()?;
    if !(dt_out > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt_out",
            value: dt_out,
            constraint: "must be > 0",
        });
    }
    if duration < 100.0 * dt_out {
        return Err(Error::DurationTooShort {
            duration,
            min: 100.0 * dt_out,
        });
    }
    let n_out = (duration / dt_out).round() as usize;
    let mut rng = rng_from_seed(seed);
    let mut stepper = Stepper::new(params);
    let mut x = params.x0;
    let mut t = 0.0;
    let mut values = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let t_next = (k + 1) as f64 * dt_out;
        while t < t_next {
            t += stepper.step(&mut x, &mut rng)?;
        }
        values.push(x);
    }
    UniformSeries::new(0.0, dt_out, values)
}

/// Evolve `n_paths` independent paths from `x_start` for a fixed time
/// horizon; returns the endpoint samples and the fraction of paths that
/// touched a boundary along the way.
pub fn evolve_ensemble(
    params: &SdeParams,
    x_start: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let mut run_params = *params;
    run_params.x0 = x_start;
    run_params.validate()?;
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: horizon,
            constraint: "must be > 0",
        });
    }
    let mut master = rng_from_seed(seed);
    let seeds: Vec<u64> = (0..n_paths).map(|_| master.random()).collect();
    // Paths are independent; parallel evaluation in seed order keeps the
    // result deterministic.
    let results: Result<Vec<(f64, bool)>> = seeds
        .par_iter()
        .map(|path_seed| {
            let mut rng = rng_from_seed(*path_seed);
            let mut stepper = Stepper::new(&run_params);
            let mut x = x_start;
            let mut t = 0.0;
            while t < horizon {
                t += stepper.step(&mut x, &mut rng)?;
            }
            Ok((x, stepper.touched_boundary))
        })
        .collect();
    let results = results?;
    let touched = results.iter().filter(|(_, b)| *b).count();
    let endpoints: Vec<f64> = results.into_iter().map(|(x, _)| x).collect();
    Ok((endpoints, touched as f64 / n_paths as f64))
}

/// Empirical check of the transition-density scaling
/// `a P(a x', t | a x, 0) = P(x', a^{2(eta-1)} t | x, 0)`.
#[derive(Debug, Clone)]
pub struct TransitionHistogramPair {
    /// Endpoints from `x_start` evolved for `a^{2(eta-1)} t`, binned.
    pub direct: LogHistogram,
    /// Endpoints from `a * x_start` evolved for `t`, divided by `a`, binned.
    pub rescaled: LogHistogram,
    pub scale_a: f64,
    pub t: f64,
    pub direct_samples: Vec<f64>,
    pub rescaled_samples: Vec<f64>,
    /// Largest boundary-touch fraction of the two ensembles.
    pub boundary_fraction: f64,
    /// Set when more than 1% of paths touched a boundary: scaling is then
    /// contaminated by the reflecting walls.
    pub boundary_warning: bool,
}

pub fn transition_scaling_samples(
    params: &SdeParams,
    x_start: f64,
    a: f64,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Result<TransitionHistogramPair> {
    params.validate()?;
    if !(a > 0.0) {
        return Err(Error::InvalidParameter {
            name: "a",
            value: a,
            constraint: "scale must be > 0",
        });
    }
    for (name, v) in [("x_start", x_start), ("a*x_start", a * x_start)] {
        if !(v > params.x_min && v < params.x_max) {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                constraint: "start must lie strictly inside (x_min, x_max)",
            });
        }
    }
    let scaled_horizon = a.powf(2.0 * (params.eta - 1.0)) * t;
    let (direct_samples, frac_direct) =
        evolve_ensemble(params, x_start, scaled_horizon, n_paths, seed)?;
    let (raw, frac_rescaled) =
        evolve_ensemble(params, a * x_start, t, n_paths, seed.wrapping_add(1))?;
    let rescaled_samples: Vec<f64> = raw.iter().map(|x| x / a).collect();

    let bins = 16;
    let direct = LogHistogram::from_values(&direct_samples, bins)?;
    let rescaled = LogHistogram::from_values(&rescaled_samples, bins)?;
    let boundary_fraction = frac_direct.max(frac_rescaled);
    Ok(TransitionHistogramPair {
        direct,
        rescaled,
        scale_a: a,
        t,
        direct_samples,
        rescaled_samples,
        boundary_fraction,
        boundary_warning: boundary_fraction > 0.01,
    })
}

/// Closed-form stationary density C x^{-lambda} on [x_min, x_max].
pub fn stationary_pdf_theory(params: &SdeParams, x: f64) -> Result<f64> {
    params.validate()?;
    if !(x >= params.x_min && x <= params.x_max) {
        return Err(Error::InvalidParameter {
            name: "x",
            value: x,
            constraint: "outside the [x_min, x_max] support",
        });
    }
    let c = stationary_norm_constant(params);
    Ok(c * x.powf(-params.lambda))
}

fn stationary_norm_constant(params: &SdeParams) -> f64 {
    let l = params.lambda;
    if (l - 1.0).abs() < 1e-12 {
        1.0 / (params.x_max / params.x_min).ln()
    } else {
        (l - 1.0) / (params.x_min.powf(1.0 - l) - params.x_max.powf(1.0 - l))
    }
}

/// Spectral exponent beta = 1 + (lambda - 3) / (2 eta - 2) and the Hurst
/// parameter H = (beta - 1) / 2 it maps to.
pub fn psd_exponent_theory(params: &SdeParams) -> Result<(f64, f64)> {
    if !(params.eta > 1.0) {
        return Err(Error::InvalidParameter {
            name: "eta",
            value: params.eta,
            constraint: "must be > 1",
        });
    }
    let beta = 1.0 + (params.lambda - 3.0) / (2.0 * params.eta - 2.0);
    Ok((beta, (beta - 1.0) / 2.0))
}

/// Parameters of the synthetic return model r = b0 (1 + a0 |p|) w.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReturnModelParams {
    /// Endogenous impact; 0 degenerates to pure exogenous noise.
    pub a0: f64,
    /// Pre-normalization scale. The emitted series is post-normalized to
    /// unit standard deviation, which realizes the normalizing role of b0
    /// operationally, so the output does not depend on its absolute value.
    pub b0: f64,
    /// Elementary return window (seconds); the SDE is sampled at this step.
    pub delta: f64,
}

impl ReturnModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a0 >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "a0",
                value: self.a0,
                constraint: "must be >= 0",
            });
        }
        if !(self.b0 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "b0",
                value: self.b0,
                constraint: "must be > 0",
            });
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: self.delta,
                constraint: "must be > 0",
            });
        }
        Ok(())
    }
}

/// Synthetic elementary returns: |p(t)| is the simulated SDE state at step
/// `delta`, each return is b0 (1 + a0 |p|) times an independent standard
/// Gaussian, and the series is normalized to unit standard deviation.
pub fn generate_model_returns(
    sde: &SdeParams,
    rm: &ReturnModelParams,
    duration: f64,
    seed: u64,
) -> Result<UniformSeries> {
    rm.validate()?;
    let path = simulate_sde(sde, duration, rm.delta, child_rng_seed(seed, 0))?;
    let mut noise = child_rng(seed, 1);
    let raw: Vec<f64> = path
        .values()
        .iter()
        .map(|x| {
            let w: f64 = noise.sample(StandardNormal);
            rm.b0 * (1.0 + rm.a0 * x) * w
        })
        .collect();
    let series = UniformSeries::new(0.0, rm.delta, raw)?;
    let (normalized, _scale) = series.normalize_unit_std()?;
    Ok(normalized)
}

fn child_rng_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = child_rng(seed, stream);
    rng.random()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{self, ks_two_sample, ks_two_sample_critical, pearson};

    #[test]
    fn params_validation() {
        assert!(SdeParams::standard(2.5, 3.0).validate().is_ok());
        assert!(SdeParams::standard(1.0, 3.0).validate().is_err());
        let mut p = SdeParams::standard(2.5, 3.0);
        p.kappa = 1.5;
        assert!(p.validate().is_err());
        p.kappa = 0.1;
        p.x0 = p.x_min;
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_noise_drift_moves_up_for_lambda_below_two_eta() {
        // With dW = 0 the drift (eta - lambda/2) x^{2 eta - 1} is positive
        // for lambda < 2 eta, so the state must rise monotonically.
        let p = SdeParams::standard(2.5, 3.0);
        let mut stepper = Stepper::new(&p);
        let mut x = p.x_min;
        let mut prev = x;
        for _ in 0..100 {
            stepper.step_with_noise(&mut x, 0.0).unwrap();
            assert!(x > prev, "state did not increase: {x} <= {prev}");
            prev = x;
        }
    }

    #[test]
    fn internal_step_matches_state_dependence() {
        let p = SdeParams::standard(2.5, 3.0);
        let stepper = Stepper::new(&p);
        // dt = kappa^2 x^{-3} for eta = 5/2.
        assert!((stepper.internal_dt(1.0) - 0.01).abs() < 1e-15);
        assert!((stepper.internal_dt(10.0) - 1e-5).abs() < 1e-18);
        // Non-integer exponent path.
        let p2 = SdeParams {
            eta: 1.75,
            ..SdeParams::standard(1.75, 3.0)
        };
        let s2 = Stepper::new(&p2);
        assert!(s2.time_exp_int.is_none());
        assert!((s2.internal_dt(4.0) - 0.01 * 4f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn path_stays_in_domain_and_is_deterministic() {
        let p = SdeParams::standard(2.5, 3.0);
        let a = simulate_sde(&p, 50.0, 0.01, 99).unwrap();
        let b = simulate_sde(&p, 50.0, 0.01, 99).unwrap();
        assert_eq!(a.values(), b.values());
        for v in a.values() {
            assert!(*v >= p.x_min && *v <= p.x_max);
        }
        let c = simulate_sde(&p, 50.0, 0.01, 100).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn duration_precondition_enforced() {
        let p = SdeParams::standard(2.5, 3.0);
        assert!(matches!(
            simulate_sde(&p, 0.5, 0.01, 1),
            Err(Error::DurationTooShort { .. })
        ));
    }

    #[test]
    fn stationary_histogram_slope_smoke() {
        // Short-run sanity check of the stationary exponent; the full
        // 1e7-sample verification runs in the acceptance suite.
        let mut p = SdeParams::standard(2.5, 3.0);
        p.kappa = 0.05;
        let path = simulate_sde(&p, 400.0, 2e-3, 7).unwrap();
        let hist = LogHistogram::from_values(path.values(), 8).unwrap();
        let centers = hist.centers();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..hist.len() {
            if hist.counts[i] > 0 && centers[i] >= 3.0 && centers[i] <= 100.0 {
                xs.push(centers[i].ln());
                ys.push(hist.density[i].ln());
            }
        }
        let fit = stats::ols(&xs, &ys).unwrap();
        assert!(
            (fit.slope + 3.0).abs() < 0.3,
            "stationary slope {} too far from -3",
            fit.slope
        );
    }

    #[test]
    fn stationary_pdf_closed_forms() {
        let p = SdeParams {
            eta: 2.5,
            lambda: 2.0,
            x_min: 1.0,
            x_max: 100.0,
            kappa: 0.1,
            x0: 10.0,
        };
        // C = 1 / (1 - 1/100) = 100/99.
        let d = stationary_pdf_theory(&p, 1.0).unwrap();
        assert!((d - 100.0 / 99.0).abs() < 1e-12);

        let p1 = SdeParams { lambda: 1.0 + 1e-15, ..p };
        let d1 = stationary_pdf_theory(&p1, 1.0).unwrap();
        assert!((d1 - 1.0 / 100f64.ln()).abs() < 1e-9);

        assert!(stationary_pdf_theory(&p, 0.5).is_err());
        assert!(stationary_pdf_theory(&p, 200.0).is_err());
    }

    #[test]
    fn stationary_pdf_integrates_to_one() {
        // Simpson quadrature on a log grid, the independent normalization
        // check.
        let p = SdeParams::standard(2.5, 3.0);
        let n = 20_001;
        let lo = p.x_min.ln();
        let hi = p.x_max.ln();
        let hstep = (hi - lo) / (n - 1) as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let u = lo + i as f64 * hstep;
            let x = u.exp();
            // Integrand p(x) dx = p(e^u) e^u du.
            let f = stationary_pdf_theory(&p, x).unwrap() * x;
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * f;
        }
        let integral = acc * hstep / 3.0;
        assert!((integral - 1.0).abs() < 1e-10, "integral {integral}");
    }

    #[test]
    fn psd_exponents() {
        let (beta, h) = psd_exponent_theory(&SdeParams::standard(2.5, 3.0)).unwrap();
        assert!((beta - 1.0).abs() < 1e-15);
        assert!(h.abs() < 1e-15);
        let (beta, h) = psd_exponent_theory(&SdeParams::standard(2.5, 4.0)).unwrap();
        assert!((beta - 4.0 / 3.0).abs() < 1e-15);
        assert!((h - 1.0 / 6.0).abs() < 1e-15);
        // beta = 1.7 maps to H = 0.35 through H = (beta - 1)/2.
        assert!(((1.7_f64 - 1.0) / 2.0 - 0.35).abs() < 1e-15);
    }

    #[test]
    fn transition_scaling_identity_at_a_one() {
        let p = SdeParams::standard(2.5, 3.0);
        let pair = transition_scaling_samples(&p, 10.0, 1.0, 5e-5, 4000, 12).unwrap();
        assert!(!pair.boundary_warning, "boundary fraction {}", pair.boundary_fraction);
        let d = ks_two_sample(&pair.direct_samples, &pair.rescaled_samples);
        let crit = ks_two_sample_critical(4000, 4000, 0.01);
        assert!(d < crit, "KS {d} vs critical {crit} for identical laws");
    }

    #[test]
    fn model_returns_unit_scale_and_gaussian_degenerate() {
        let sde = SdeParams::standard(2.5, 3.0);
        let rm = ReturnModelParams {
            a0: 0.0,
            b0: 2.0,
            delta: 0.01,
        };
        let r = generate_model_returns(&sde, &rm, 200.0, 5).unwrap();
        assert_eq!(r.len(), 20_000);
        assert!((stats::rms(r.values()) - 1.0).abs() < 1e-12);
        // a0 = 0: i.i.d. Gaussian; lag-1 autocorrelation ~ 0.
        let v = r.values();
        let mut num = 0.0;
        let mut den = 0.0;
        let m = stats::mean(v);
        for i in 0..v.len() - 1 {
            num += (v[i] - m) * (v[i + 1] - m);
        }
        for x in v {
            den += (x - m) * (x - m);
        }
        assert!((num / den).abs() < 0.02);
    }

    #[test]
    fn model_returns_volatility_tracks_state() {
        // lambda = 4 keeps the variance-dominating excursions inside the
        // band the sampling grid can resolve; the deep tail of lambda = 3
        // moves faster than any observation window and would dilute the
        // pointwise correlation no matter how well the filter works.
        let sde = SdeParams::standard(2.5, 4.0);
        let rm = ReturnModelParams {
            a0: 10.0,
            b0: 1.0,
            delta: 1e-5,
        };
        let duration = 10.0;
        let window = 40;
        let r = generate_model_returns(&sde, &rm, duration, 6).unwrap();
        let path = simulate_sde(&sde, duration, rm.delta, child_rng_seed(6, 0)).unwrap();
        let vol = r.rolling_std(window).unwrap();
        let n = vol.len();
        // Compare against the state at the window center: the rolling
        // filter is causal, so the half-window lag would otherwise smear
        // the sharp excursions that dominate the correlation.
        let centered = &path.values()[window / 2..window / 2 + n];
        let corr = pearson(vol.values(), centered);
        assert!(corr > 0.9, "volatility/state correlation {corr}");
    }
}
