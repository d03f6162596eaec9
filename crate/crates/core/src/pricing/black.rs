//! Black formula on forwards, its Greeks, and implied-volatility inversion.

use crate::error::{Error, Result};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Undiscounted call on a forward `f` with total variance `var` = sigma^2 tau.
pub fn black_call(f: f64, k: f64, var: f64) -> f64 {
    if var <= 0.0 || k <= 0.0 {
        return (f - k).max(0.0);
    }
    let sd = var.sqrt();
    let d1 = ((f / k).ln() + 0.5 * var) / sd;
    let d2 = d1 - sd;
    f * norm_cdf(d1) - k * norm_cdf(d2)
}

/// Call value together with d/df, d2/df2 and d/dvar.
pub fn black_call_greeks(f: f64, k: f64, var: f64) -> (f64, f64, f64, f64) {
    if var <= 0.0 {
        let delta = if f > k { 1.0 } else { 0.0 };
        return ((f - k).max(0.0), delta, 0.0, 0.0);
    }
    let sd = var.sqrt();
    let d1 = ((f / k).ln() + 0.5 * var) / sd;
    let d2 = d1 - sd;
    let value = f * norm_cdf(d1) - k * norm_cdf(d2);
    let pdf = norm_pdf(d1);
    (value, norm_cdf(d1), pdf / (f * sd), 0.5 * f * pdf / sd)
}

/// Discounted Black-Scholes call with spot `s`, rate `r`, vol `sigma`, time `tau`.
pub fn bs_call(s: f64, k: f64, r: f64, sigma: f64, tau: f64) -> f64 {
    let df = (-r * tau).exp();
    df * black_call(s / df, k, sigma * sigma * tau)
}

/// Black-Scholes implied volatility of a discounted call price. Newton steps
/// on total variance, safeguarded by a bisection bracket.
pub fn implied_vol(price: f64, k: f64, tau: f64, forward: f64, r: f64) -> Result<f64> {
    if !(tau > 0.0 && k > 0.0 && forward > 0.0) {
        return Err(Error::Domain("implied vol needs tau, K, forward > 0".into()));
    }
    let df = (-r * tau).exp();
    let target = price / df;
    let lower = (forward - k).max(0.0);
    let upper = forward;
    let slack = 1e-14 * forward.max(k);
    if !(target >= lower - slack && target < upper) {
        return Err(Error::PriceOutOfBounds { price, lower: lower * df, upper: upper * df });
    }
    if target - lower <= slack {
        return Ok(0.0);
    }
    // bracket in sigma
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while black_call(forward, k, hi * hi * tau) < target {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::PriceOutOfBounds { price, lower: lower * df, upper: upper * df });
        }
    }
    let mut sig = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (v, _, _, vega_var) = black_call_greeks(forward, k, sig * sig * tau);
        let diff = v - target;
        if diff > 0.0 {
            hi = sig;
        } else {
            lo = sig;
        }
        // d price / d sigma = vega_var * 2 sigma tau
        let vega = vega_var * 2.0 * sig * tau;
        let mut next = if vega > 1e-300 { sig - diff / vega } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - sig).abs() < 1e-14 * sig.max(1e-3) || hi - lo < 1e-15 {
            return Ok(next);
        }
        sig = next;
    }
    Ok(sig)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_call_parity_and_greeks() {
        let (f, k, v) = (1.1, 1.0, 0.04);
        let (c, d, g, vv) = black_call_greeks(f, k, v);
        let h = 1e-4;
        let cp = black_call(f + h, k, v);
        let cm = black_call(f - h, k, v);
        assert!(((cp - cm) / (2.0 * h) - d).abs() < 1e-8);
        assert!(((cp - 2.0 * c + cm) / (h * h) - g).abs() < 1e-5);
        let hv = 1e-6;
        let cv = (black_call(f, k, v + hv) - black_call(f, k, v - hv)) / (2.0 * hv);
        assert!((cv - vv).abs() < 1e-8);
    }

    #[test]
    fn implied_vol_round_trip() {
        for &(k, tau, r) in &[(1.0, 1.0, 0.0), (0.7, 0.25, 0.05), (1.6, 3.0, 0.02)] {
            let s = 1.0;
            let p = bs_call(s, k, r, 0.2437, tau);
            let iv = implied_vol(p, k, tau, s * (r * tau).exp(), r).unwrap();
            assert!((iv - 0.2437).abs() < 1e-8, "{iv}");
        }
    }

    #[test]
    fn implied_vol_near_intrinsic() {
        // at the money the time value is ~ F sigma sqrt(tau / 2 pi)
        let iv = implied_vol(1e-12, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert!(iv < 1e-3, "{iv}");
        assert_eq!(implied_vol(0.1, 1.0, 1.0, 1.1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn implied_vol_rejects_arbitrage() {
        assert!(matches!(implied_vol(1.5, 1.0, 1.0, 1.0, 0.0), Err(Error::PriceOutOfBounds { .. })));
        assert!(matches!(implied_vol(0.05, 1.0, 1.0, 1.1, 0.0), Err(Error::PriceOutOfBounds { .. })));
    }
}
