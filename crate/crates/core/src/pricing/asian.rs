use super::black::{black_call, norm_cdf, norm_pdf};
use super::model::BSModelSpec;
use super::PathPayoff;
use crate::error::{Error, Result};
use crate::functional::{DerivativeBundle, DerivativeMethod, NonAnticipativeFunctional, StoppedPath};
use crate::path::SampledPath;
use serde::{Deserialize, Serialize};

/// Call on the geometric average exp((1/T) int_0^T log S ds).
#[derive(Debug, Clone)]
pub struct GeometricAsian {
    pub model: BSModelSpec,
    pub strike: f64,
}

/// Value and derivatives from the running log-integral g, current value w at time t.
pub fn geometric_asian_value(model: &BSModelSpec, strike: f64, t: f64, w: f64, g: f64) -> Result<DerivativeBundle> {
    let big_t = model.horizon;
    if !(w > 0.0) {
        return Err(Error::Domain("geometric Asian needs a positive path".into()));
    }
    if t > big_t * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("t = {t} is past the horizon {big_t}")));
    }
    let rem = (big_t - t).max(0.0);
    let c = rem / big_t;
    let (m1, m2) = model.weighted_variances(t.min(big_t));
    let mu = (g + rem * w.ln() - 0.5 * m1) / big_t;
    let v = m2 / (big_t * big_t);
    let sig = model.sigma(t.min(big_t));
    let (value, a, b) = if v > 0.0 {
        let sv = v.sqrt();
        let fwd = (mu + 0.5 * v).exp();
        let d1 = (mu - strike.ln() + v) / sv;
        (black_call(fwd, strike, v), fwd * norm_cdf(d1), fwd * norm_pdf(d1) / sv)
    } else {
        let e = mu.exp();
        if e > strike {
            (e - strike, e, 0.0)
        } else {
            (0.0, 0.0, 0.0)
        }
    };
    let grad_v = a * c / w;
    let hess_v = c / (w * w) * ((c - 1.0) * a + c * b);
    let horiz = a * rem * sig * sig / (2.0 * big_t) - 0.5 * (a + b) * rem * rem * sig * sig / (big_t * big_t);
    Ok(DerivativeBundle { value, grad_v, hess_v, horiz, bump: 0.0, method: DerivativeMethod::ClosedForm })
}

impl NonAnticipativeFunctional for GeometricAsian {
    fn value(&self, sp: &StoppedPath) -> Result<f64> {
        Ok(geometric_asian_value(&self.model, self.strike, sp.time(), sp.current(), sp.log_integral())?.value)
    }

    fn sensitivities(&self, sp: &StoppedPath) -> Option<Result<DerivativeBundle>> {
        Some(geometric_asian_value(&self.model, self.strike, sp.time(), sp.current(), sp.log_integral()))
    }
}

impl PathPayoff for GeometricAsian {
    fn payoff(&self, path: &SampledPath) -> Result<f64> {
        if !path.is_price() {
            return Err(Error::Domain("geometric Asian needs a price path".into()));
        }
        let g = path.log_integral_to(path.len() - 1);
        Ok(((g / path.horizon()).exp() - self.strike).max(0.0))
    }
}

/// Grid for the arithmetic Asian PDE in (log S, running integral).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsianGrid {
    pub nx: usize,
    pub na: usize,
    pub nt: usize,
}

impl Default for AsianGrid {
    fn default() -> Self {
        AsianGrid { nx: 400, na: 400, nt: 200 }
    }
}

/// Call on the arithmetic average (1/T) int_0^T S ds.
#[derive(Debug, Clone)]
pub struct ArithmeticAsian {
    pub model: BSModelSpec,
    pub strike: f64,
    pub grid: AsianGrid,
}

impl ArithmeticAsian {
    pub fn new(model: BSModelSpec, strike: f64) -> Self {
        ArithmeticAsian { model, strike, grid: AsianGrid::default() }
    }
}

const GHOSTS: usize = 3;

/// f(t, S, a) for the arithmetic average call with running integral a.
///
/// Strang splitting per step: half a transport step in a (semi-Lagrangian,
/// cubic), a Crank-Nicolson diffusion step in log S, another half transport.
/// The region a >= K T is known in closed form and fed in through ghost nodes.
pub fn arithmetic_asian_value(model: &BSModelSpec, strike: f64, grid: AsianGrid, t: f64, s: f64, a0: f64) -> Result<f64> {
    let big_t = model.horizon;
    if !(s > 0.0) {
        return Err(Error::Domain("arithmetic Asian needs a positive path".into()));
    }
    if t > big_t * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("t = {t} is past the horizon {big_t}")));
    }
    let tau = (big_t - t).max(0.0);
    let linear = |a: f64, rem: f64, sx: f64| (a + rem * sx) / big_t - strike;
    if tau == 0.0 {
        return Ok((a0 / big_t - strike).max(0.0));
    }
    let a_max = strike * big_t;
    if strike <= 0.0 || a0 >= a_max {
        return Ok(linear(a0, tau, s));
    }
    let AsianGrid { nx, na, nt } = grid;
    if nx < 8 || na < 4 || nt < 1 || nx % 2 != 0 {
        return Err(Error::Grid("need nx >= 8 (even), na >= 4, nt >= 1".into()));
    }
    let sigma_max = model.sigma_max();
    let half = (6.0 * sigma_max * tau.sqrt()).max(0.05);
    let dx = 2.0 * half / nx as f64;
    let x0 = s.ln();
    let xs: Vec<f64> = (0..=nx).map(|j| x0 - half + j as f64 * dx).collect();
    let spots: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
    let da = (a_max - a0) / na as f64;
    let nac = na + 1 + GHOSTS;
    let avals: Vec<f64> = (0..nac).map(|i| a0 + i as f64 * da).collect();
    let dt = tau / nt as f64;

    // f[j * nac + i]; terminal payoff is zero below a_max
    let mut f = vec![0.0; (nx + 1) * nac];
    let mut scratch = f.clone();
    let fill_exact = |f: &mut [f64], rem: f64| {
        for j in 0..=nx {
            for i in na..nac {
                f[j * nac + i] = linear(avals[i], rem, spots[j]);
            }
        }
    };
    fill_exact(&mut f, 0.0);

    let transport = |src: &[f64], dst: &mut [f64], h: f64, rem_after: f64| {
        for j in 0..=nx {
            let row = &src[j * nac..(j + 1) * nac];
            for i in 0..nac {
                let target = avals[i] + spots[j] * h;
                let p = (target - a0) / da;
                let out = if i >= na || p >= (na + GHOSTS - 1) as f64 {
                    // source is exact there, and the exact solution is transport-invariant
                    linear(avals[i], rem_after, spots[j])
                } else {
                    let k = (p.floor() as usize).clamp(1, na + GHOSTS - 2) - 1;
                    lagrange4(&row[k..k + 4], p - k as f64)
                };
                dst[j * nac + i] = out;
            }
        }
    };

    let mut lower = vec![0.0; nx + 1];
    let mut diag = vec![0.0; nx + 1];
    let mut upper = vec![0.0; nx + 1];
    let mut rhs = vec![0.0; nx + 1];
    let mut sol = vec![0.0; nx + 1];
    let mut tl = big_t;
    for _ in 0..nt {
        let rem = big_t - tl;
        transport(&f, &mut scratch, 0.5 * dt, rem + 0.5 * dt);
        std::mem::swap(&mut f, &mut scratch);

        let sig = model.sigma((tl - 0.5 * dt).max(0.0));
        let k2 = 0.5 * sig * sig;
        if k2 > 0.0 {
            // L f_j = cm f_{j-1} + c0 f_j + cp f_{j+1}
            let cm = k2 * (1.0 / (dx * dx) + 0.5 / dx);
            let c0 = -2.0 * k2 / (dx * dx);
            let cp = k2 * (1.0 / (dx * dx) - 0.5 / dx);
            let rem_next = rem + 0.5 * dt;
            for i in 0..na {
                for j in 0..=nx {
                    let fj = f[j * nac + i];
                    if j == 0 || j == nx {
                        lower[j] = 0.0;
                        upper[j] = 0.0;
                        diag[j] = 1.0;
                        rhs[j] = linear(avals[i], rem_next, spots[j]).max(0.0);
                    } else {
                        let fm = f[(j - 1) * nac + i];
                        let fp = f[(j + 1) * nac + i];
                        lower[j] = -0.5 * dt * cm;
                        diag[j] = 1.0 - 0.5 * dt * c0;
                        upper[j] = -0.5 * dt * cp;
                        rhs[j] = fj + 0.5 * dt * (cm * fm + c0 * fj + cp * fp);
                    }
                }
                thomas(&lower, &diag, &upper, &rhs, &mut sol);
                for j in 0..=nx {
                    f[j * nac + i] = sol[j];
                }
            }
        }

        transport(&f, &mut scratch, 0.5 * dt, rem + dt);
        std::mem::swap(&mut f, &mut scratch);
        fill_exact(&mut f, rem + dt);
        tl -= dt;
    }
    Ok(f[(nx / 2) * nac])
}

/// Cubic Lagrange interpolation through 4 equally spaced values at 0..3, evaluated at u.
fn lagrange4(y: &[f64], u: f64) -> f64 {
    let (a, b, c, d) = (u, u - 1.0, u - 2.0, u - 3.0);
    -y[0] * b * c * d / 6.0 + y[1] * a * c * d / 2.0 - y[2] * a * b * d / 2.0 + y[3] * a * b * c / 6.0
}

pub(crate) fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64], out: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    out[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
}

impl NonAnticipativeFunctional for ArithmeticAsian {
    fn value(&self, sp: &StoppedPath) -> Result<f64> {
        arithmetic_asian_value(&self.model, self.strike, self.grid, sp.time(), sp.current(), sp.integral())
    }
}

impl PathPayoff for ArithmeticAsian {
    fn payoff(&self, path: &SampledPath) -> Result<f64> {
        let a = path.integral_to(path.len() - 1);
        Ok((a / path.horizon() - self.strike).max(0.0))
    }
}
