//! Bessel functions of the first kind: series evaluation of J_nu and its
//! first positive zero, needed for the exponential cutoff rate of burst
//! durations.

use crate::error::{Error, Result};

/// Lanczos approximation (g = 7) of ln Gamma, accurate to ~1e-15 for
/// positive arguments.
fn ln_gamma(z: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if z < 0.5 {
        // Reflection for small arguments.
        let pi = std::f64::consts::PI;
        (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z)
    } else {
        let z = z - 1.0;
        let mut x = COEF[0];
        for (i, c) in COEF.iter().enumerate().skip(1) {
            x += c / (z + i as f64);
        }
        let t = z + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
    }
}

/// J_nu(x) by the ascending power series. Accurate to ~1e-12 for the
/// moderate arguments used here (x up to ~20, nu >= -1/2).
pub fn bessel_j(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    let half_x = 0.5 * x;
    let q = half_x * half_x;
    let mut term = (-ln_gamma(nu + 1.0)).exp();
    let mut sum = term;
    for m in 1..400 {
        let m = m as f64;
        term *= -q / (m * (m + nu));
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum * half_x.powf(nu)
}

/// Bessel index nu = (lambda - 2*eta + 1) / (2*(eta - 1)) entering the
/// burst-duration cutoff.
pub fn bessel_index(eta: f64, lambda: f64) -> Result<f64> {
    if !(eta > 1.0) {
        return Err(Error::InvalidParameter {
            name: "eta",
            value: eta,
            constraint: "must be > 1",
        });
    }
    Ok((lambda - 2.0 * eta + 1.0) / (2.0 * (eta - 1.0)))
}

/// First positive zero j_{nu,1} of J_nu, for nu >= -1/2, to an absolute
/// accuracy of 1e-10: the zero is bracketed by an upward scan (J_nu is
/// positive on (0, j_{nu,1})) and refined by bisection. The scan starts from
/// the classical large-order estimate nu + 1.8557 * nu^(1/3) with a safety
/// margin.
pub fn bessel_first_zero(nu: f64) -> Result<f64> {
    if nu < -0.5 {
        return Err(Error::UnsupportedBesselOrder { nu });
    }
    let mut lo = if nu > 1.0 {
        (nu + 1.8557 * nu.cbrt() - 2.0).max(0.05)
    } else {
        0.05
    };
    // J_nu is positive just above zero for nu >= -1/2 (for negative orders
    // the leading (x/2)^nu / Gamma(nu+1) factor is positive).
    let step = 0.1;
    let mut f_lo = bessel_j(nu, lo);
    let mut hi = lo;
    let mut bracketed = false;
    for _ in 0..2000 {
        hi = lo + step;
        let f_hi = bessel_j(nu, hi);
        if f_lo > 0.0 && f_hi <= 0.0 {
            bracketed = true;
            if f_hi == 0.0 {
                return Ok(hi);
            }
            break;
        }
        lo = hi;
        f_lo = f_hi;
    }
    if !bracketed {
        return Err(Error::InvalidParameter {
            name: "nu",
            value: nu,
            constraint: "failed to bracket the first Bessel zero",
        });
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if bessel_j(nu, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
