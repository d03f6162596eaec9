use super::expansion::{charfun_approx, ExpansionPoint};
use super::model::LocalLevyModel;
use crate::error::{Error, Result};
use crate::quad::adaptive_gk;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

pub const DEFAULT_GAMMA: f64 = 1.5;

/// Call price from a characteristic function of log S(T) via the damped
/// contour Im = gamma. `charfun` is evaluated at -(xi + i gamma).
pub fn lewis_call<F>(charfun: F, k: f64, rate: f64, tau: f64, gamma: f64, xi_max: f64) -> Result<f64>
where
    F: Fn(C64) -> Result<C64>,
{
    if !(gamma > 1.0) {
        return Err(Error::Domain(format!("call transform needs gamma > 1, got {gamma}")));
    }
    if !(k > 0.0) {
        return Err(Error::Domain("strike must be positive".into()));
    }
    let lk = k.ln();
    let scale = k.powf(1.0 - gamma);
    let mut failure = None;
    let integrand = |u: f64| {
        let i = C64::i();
        let fhat = scale * (i * u * lk).exp() / ((i * u - gamma) * (i * u - gamma + 1.0));
        match charfun(-C64::new(u, gamma)) {
            Ok(phi) => (fhat * phi).re,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let v = adaptive_gk(integrand, 0.0, xi_max, 1e-13, 1e-12, 5000)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((-rate * tau).exp() / PI * v)
}

/// Truncation point where |exp(tau Re psi)| has dropped below 1e-14 on the contour.
pub fn truncation(model: &LocalLevyModel, alpha0: f64, tau: f64, gamma: f64) -> Result<f64> {
    let mut u = 1.0;
    loop {
        let psi = model.psi_jet(alpha0, -C64::new(u, gamma))?[0];
        if tau * psi.re < (1e-14f64).ln() {
            // headroom for the polynomial growth of the correction terms
            return Ok(1.5 * u);
        }
        u *= 1.25;
        if u > 1e5 {
            return Err(Error::Quadrature("characteristic function does not decay".into()));
        }
    }
}

/// Price of a call with strike `k` at time `t` and spot `s`, using the order-`n`
/// expansion of the characteristic function.
#[allow(clippy::too_many_arguments)]
pub fn lewis_price(
    model: &LocalLevyModel,
    order: usize,
    k: f64,
    t: f64,
    s: f64,
    maturity: f64,
    gamma: f64,
) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain("spot must be positive".into()));
    }
    let x = s.ln();
    let pt = ExpansionPoint::new(t, x, maturity);
    let tau = pt.tau();
    if !(tau > 0.0) {
        return Err(Error::Domain("need t < T".into()));
    }
    let (lo, _) = model.strip();
    if -gamma <= lo {
        return Err(Error::StripViolation { xi: format!("Im = {}", -gamma), lo, hi: model.strip().1 });
    }
    let xi_max = truncation(model, model.alphas(x)[0], tau, gamma)?;
    lewis_call(|z| charfun_approx(model, order, &pt, z), k, model.rate, tau, gamma, xi_max)
}
