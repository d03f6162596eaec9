use super::asian::thomas;
use super::model::BSModelSpec;
use super::PathPayoff;
use crate::error::{Error, Result};
use crate::functional::{DerivativeBundle, DerivativeMethod, NonAnticipativeFunctional, StoppedPath};
use crate::path::SampledPath;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierGrid {
    pub nx: usize,
    pub nt: usize,
}

impl Default for BarrierGrid {
    fn default() -> Self {
        BarrierGrid { nx: 400, nt: 400 }
    }
}

/// Up-and-out call value, delta and gamma on the whole (t, log S) grid.
#[derive(Debug, Clone)]
pub struct BarrierSurface {
    strike: f64,
    barrier: f64,
    horizon: f64,
    x_lo: f64,
    dx: f64,
    dt: f64,
    nx: usize,
    nt: usize,
    // [level][node], level n at time n * dt
    value: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    gamma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierGreeks {
    pub value: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl BarrierSurface {
    /// Crank-Nicolson in log S on [log(min(s_ref, K)) - 6 sigma_max sqrt(T), log U],
    /// with two implicit half steps first.
    pub fn solve(model: &BSModelSpec, strike: f64, barrier: f64, s_ref: f64, grid: BarrierGrid) -> Result<Self> {
        if !(strike > 0.0 && barrier > strike && s_ref > 0.0) {
            return Err(Error::Domain("need 0 < K < U and a positive reference spot".into()));
        }
        let BarrierGrid { nx, nt } = grid;
        if nx < 8 || nt < 2 {
            return Err(Error::Grid("barrier grid needs nx >= 8 and nt >= 2".into()));
        }
        let big_t = model.horizon;
        let spread = (6.0 * model.sigma_max() * big_t.sqrt()).max(1.0);
        let x_lo = s_ref.min(strike).ln() - spread;
        let x_hi = barrier.ln();
        let dx = (x_hi - x_lo) / nx as f64;
        let dt = big_t / nt as f64;
        let spots: Vec<f64> = (0..=nx).map(|j| (x_lo + j as f64 * dx).exp()).collect();

        let mut value = vec![Vec::new(); nt + 1];
        let mut f: Vec<f64> = spots.iter().map(|s| (s - strike).max(0.0)).collect();
        f[nx] = 0.0;
        value[nt] = f.clone();

        let (mut lo, mut di, mut up, mut rhs, mut out) =
            (vec![0.0; nx + 1], vec![0.0; nx + 1], vec![0.0; nx + 1], vec![0.0; nx + 1], vec![0.0; nx + 1]);
        // theta-scheme step of size h: (I - th h L) f_new = (I + (1-th) h L) f_old
        let mut step = |f: &mut Vec<f64>, h: f64, theta: f64, sig: f64| {
            let k2 = 0.5 * sig * sig;
            let cm = k2 * (1.0 / (dx * dx) + 0.5 / dx);
            let c0 = -2.0 * k2 / (dx * dx);
            let cp = k2 * (1.0 / (dx * dx) - 0.5 / dx);
            for j in 0..=nx {
                if j == 0 || j == nx {
                    lo[j] = 0.0;
                    up[j] = 0.0;
                    di[j] = 1.0;
                    rhs[j] = 0.0;
                } else {
                    let lf = cm * f[j - 1] + c0 * f[j] + cp * f[j + 1];
                    lo[j] = -theta * h * cm;
                    di[j] = 1.0 - theta * h * c0;
                    up[j] = -theta * h * cp;
                    rhs[j] = f[j] + (1.0 - theta) * h * lf;
                }
            }
            thomas(&lo, &di, &up, &rhs, &mut out);
            f.copy_from_slice(&out);
        };
        for n in (0..nt).rev() {
            let sig = model.sigma(n as f64 * dt + 0.5 * dt);
            if n == nt - 1 {
                step(&mut f, 0.5 * dt, 1.0, model.sigma(n as f64 * dt + 0.75 * dt));
                step(&mut f, 0.5 * dt, 1.0, model.sigma(n as f64 * dt + 0.25 * dt));
            } else {
                step(&mut f, dt, 0.5, sig);
            }
            value[n] = f.clone();
        }

        let mut delta = Vec::with_capacity(nt + 1);
        let mut gamma = Vec::with_capacity(nt + 1);
        for lvl in &value {
            let (d, g) = grid_greeks(lvl, &spots, dx);
            delta.push(d);
            gamma.push(g);
        }
        Ok(BarrierSurface { strike, barrier, horizon: big_t, x_lo, dx, dt, nx, nt, value, delta, gamma })
    }

    pub fn barrier(&self) -> f64 {
        self.barrier
    }

    pub fn lower_spot(&self) -> f64 {
        self.x_lo.exp()
    }

    /// Value and spot Greeks at (t, S) for a path that has not touched U.
    pub fn greeks(&self, t: f64, s: f64) -> BarrierGreeks {
        let zero = BarrierGreeks { value: 0.0, delta: 0.0, gamma: 0.0 };
        if s >= self.barrier || !(s > 0.0) {
            return zero;
        }
        if t >= self.horizon {
            let itm = s > self.strike;
            return BarrierGreeks { value: (s - self.strike).max(0.0), delta: if itm { 1.0 } else { 0.0 }, gamma: 0.0 };
        }
        let x = s.ln();
        if x < self.x_lo {
            return zero;
        }
        let u = (t.max(0.0) / self.dt).min(self.nt as f64);
        let n = (u.floor() as usize).min(self.nt - 1);
        let w = u - n as f64;
        let at = |tab: &Vec<Vec<f64>>| (1.0 - w) * self.interp(&tab[n], x) + w * self.interp(&tab[n + 1], x);
        BarrierGreeks { value: at(&self.value), delta: at(&self.delta), gamma: at(&self.gamma) }
    }

    fn interp(&self, row: &[f64], x: f64) -> f64 {
        let p = (x - self.x_lo) / self.dx;
        let k = (p.floor() as usize).clamp(1, self.nx - 2) - 1;
        let u = p - k as f64;
        let y = &row[k..k + 4];
        let (a, b, c, d) = (u, u - 1.0, u - 2.0, u - 3.0);
        -y[0] * b * c * d / 6.0 + y[1] * a * c * d / 2.0 - y[2] * a * b * d / 2.0 + y[3] * a * b * c / 6.0
    }

    /// Extreme node gammas over t < T, excluding the boundary nodes.
    pub fn gamma_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &self.gamma[..self.nt] {
            for g in &row[1..self.nx] {
                lo = lo.min(*g);
                hi = hi.max(*g);
            }
        }
        (lo, hi)
    }
}

fn grid_greeks(f: &[f64], spots: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>) {
    let n = f.len();
    let mut d = vec![0.0; n];
    let mut g = vec![0.0; n];
    for j in 1..n - 1 {
        let fx = (f[j + 1] - f[j - 1]) / (2.0 * dx);
        let fxx = (f[j + 1] - 2.0 * f[j] + f[j - 1]) / (dx * dx);
        d[j] = fx / spots[j];
        g[j] = (fxx - fx) / (spots[j] * spots[j]);
    }
    d[0] = d[1];
    g[0] = g[1];
    d[n - 1] = d[n - 2];
    g[n - 1] = g[n - 2];
    (d, g)
}

/// Up-and-out call, continuously monitored: knocked out once the running max reaches U.
#[derive(Debug, Clone)]
pub struct UpOutBarrier {
    pub model: BSModelSpec,
    pub strike: f64,
    pub barrier: f64,
    surface: Arc<BarrierSurface>,
}

impl UpOutBarrier {
    pub fn new(model: BSModelSpec, strike: f64, barrier: f64, s_ref: f64) -> Result<Self> {
        Self::with_grid(model, strike, barrier, s_ref, BarrierGrid::default())
    }

    pub fn with_grid(model: BSModelSpec, strike: f64, barrier: f64, s_ref: f64, grid: BarrierGrid) -> Result<Self> {
        let surface = Arc::new(BarrierSurface::solve(&model, strike, barrier, s_ref, grid)?);
        Ok(UpOutBarrier { model, strike, barrier, surface })
    }

    pub fn surface(&self) -> &BarrierSurface {
        &self.surface
    }

    fn bundle(&self, sp: &StoppedPath) -> DerivativeBundle {
        let t = sp.time();
        let g = if sp.running_max() >= self.barrier {
            BarrierGreeks { value: 0.0, delta: 0.0, gamma: 0.0 }
        } else {
            self.surface.greeks(t, sp.current())
        };
        let sig = self.model.sigma(t.min(self.model.horizon));
        let s = sp.current();
        DerivativeBundle {
            value: g.value,
            grad_v: g.delta,
            hess_v: g.gamma,
            horiz: -0.5 * sig * sig * s * s * g.gamma,
            bump: self.surface.dx,
            method: DerivativeMethod::FiniteDifference,
        }
    }
}

/// Grid value and Greeks of the up-and-out call at (t, S), S < U assumed alive.
pub fn barrier_value_fd(claim: &UpOutBarrier, t: f64, s: f64) -> Result<BarrierGreeks> {
    if t > claim.model.horizon * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("t = {t} is past the horizon")));
    }
    Ok(claim.surface.greeks(t, s))
}

impl NonAnticipativeFunctional for UpOutBarrier {
    fn value(&self, sp: &StoppedPath) -> Result<f64> {
        Ok(self.bundle(sp).value)
    }

    fn sensitivities(&self, sp: &StoppedPath) -> Option<Result<DerivativeBundle>> {
        Some(Ok(self.bundle(sp)))
    }
}

impl PathPayoff for UpOutBarrier {
    fn payoff(&self, path: &SampledPath) -> Result<f64> {
        if path.max_to(path.len() - 1) >= self.barrier {
            return Ok(0.0);
        }
        Ok((path.values()[path.len() - 1] - self.strike).max(0.0))
    }
}
