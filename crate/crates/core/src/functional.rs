//! Non-anticipative functionals of stopped paths, their vertical and
//! horizontal derivatives, Follmer integrals and the change-of-variable check.

use crate::error::{Error, Result};
use crate::path::{DyadicPartitionSequence, SampledPath};
use serde::Serialize;

/// A path stopped at `time`. Up to the stop index the values come from
/// `base`; from `seg_start` on the path sits at `current`, which a vertical
/// bump may have moved. Integrals and the running max over [0, seg_start)
/// are carried along so bumps and extensions never rewrite the past.
#[derive(Debug, Clone, Copy)]
pub struct StoppedPath<'a> {
    base: &'a SampledPath,
    index: usize,
    time: f64,
    current: f64,
    left_limit: Option<f64>,
    seg_start: f64,
    past_int: f64,
    past_log: f64,
    past_max: f64,
}

impl<'a> StoppedPath<'a> {
    /// Stop `path` at time t (previous-tick grid index).
    pub fn new(base: &'a SampledPath, t: f64) -> Result<Self> {
        let horizon = base.horizon();
        if t < 0.0 || t > horizon * (1.0 + 1e-12) {
            return Err(Error::HorizonExceeded { time: t, horizon });
        }
        let index = base.index_at(t);
        let mut s = Self::at_index(base, index);
        s.time = t;
        Ok(s)
    }

    /// Stop at grid index k.
    pub fn at_index(base: &'a SampledPath, k: usize) -> Self {
        let t = base.times()[k];
        StoppedPath {
            base,
            index: k,
            time: t,
            current: base.values()[k],
            left_limit: base.jumps().get(&k).copied(),
            seg_start: t,
            past_int: base.integral_to(k),
            past_log: if base.is_price() { base.log_integral_to(k) } else { f64::NAN },
            past_max: if k == 0 { f64::NEG_INFINITY } else { base.max_to(k - 1) },
        }
    }

    pub fn base(&self) -> &'a SampledPath {
        self.base
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn horizon(&self) -> f64 {
        self.base.horizon()
    }

    pub fn stop_index(&self) -> usize {
        self.index
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn left_limit(&self) -> Option<f64> {
        self.left_limit
    }

    /// Replace the value on [time, T]; what was held before `time` stays.
    pub fn with_current(&self, v: f64) -> Self {
        let mut s = *self;
        let held = self.time - self.seg_start;
        if held > 0.0 {
            s.past_int += held * self.current;
            s.past_log += held * self.current.ln();
            s.past_max = s.past_max.max(self.current);
            s.seg_start = self.time;
        }
        s.current = v;
        s
    }

    /// Vertical perturbation: current value + e, held over [t, T].
    pub fn bumped(&self, e: f64) -> Self {
        self.with_current(self.current + e)
    }

    /// The path just before a jump at the stop time: current = left limit.
    pub fn pre_jump(&self) -> Option<Self> {
        self.left_limit.map(|l| {
            let mut s = self.with_current(l);
            s.left_limit = None;
            s
        })
    }

    /// Horizontal extension: advance time by dt holding the path constant.
    pub fn extended(&self, dt: f64) -> Result<Self> {
        let horizon = self.horizon();
        if self.time + dt > horizon * (1.0 + 1e-12) {
            return Err(Error::HorizonExceeded { time: self.time + dt, horizon });
        }
        let mut s = *self;
        s.time += dt;
        Ok(s)
    }

    /// int_0^t omega(s) ds (left point sums on the grid, then the held value).
    pub fn integral(&self) -> f64 {
        self.past_int + (self.time - self.seg_start) * self.current
    }

    /// int_0^t log omega(s) ds.
    pub fn log_integral(&self) -> f64 {
        self.past_log + (self.time - self.seg_start) * self.current.ln()
    }

    /// sup of the stopped path over [0, t], current value included.
    pub fn running_max(&self) -> f64 {
        self.past_max.max(self.current)
    }

    /// omega(s) for s <= t; the current value is returned from the segment start on.
    pub fn value_at(&self, s: f64) -> f64 {
        if s >= self.seg_start {
            return self.current;
        }
        let k = self.base.index_at(s);
        self.base.values()[k.min(self.index)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMethod {
    ClosedForm,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DerivativeBundle {
    pub value: f64,
    pub grad_v: f64,
    pub hess_v: f64,
    pub horiz: f64,
    pub bump: f64,
    pub method: DerivativeMethod,
}

/// F(t, omega): a map of the stopped path.
pub trait NonAnticipativeFunctional: Send + Sync {
    fn value(&self, sp: &StoppedPath) -> Result<f64>;

    /// Closed-form value and derivatives, when the functional has them.
    fn sensitivities(&self, _sp: &StoppedPath) -> Option<Result<DerivativeBundle>> {
        None
    }
}

/// Functional defined by a closure.
pub struct FnFunctional<F>(pub F);

impl<F> NonAnticipativeFunctional for FnFunctional<F>
where
    F: Fn(&StoppedPath) -> f64 + Send + Sync,
{
    fn value(&self, sp: &StoppedPath) -> Result<f64> {
        Ok((self.0)(sp))
    }
}

pub fn default_bump(sp: &StoppedPath) -> f64 {
    1e-4 * sp.current().abs().max(1.0)
}

pub fn vertical_derivative<F: NonAnticipativeFunctional + ?Sized>(f: &F, sp: &StoppedPath, bump: f64) -> Result<f64> {
    if !(bump > 0.0) {
        return Err(Error::Domain("bump must be positive".into()));
    }
    Ok((f.value(&sp.bumped(bump))? - f.value(&sp.bumped(-bump))?) / (2.0 * bump))
}

pub fn vertical_derivative2<F: NonAnticipativeFunctional + ?Sized>(f: &F, sp: &StoppedPath, bump: f64) -> Result<f64> {
    if !(bump > 0.0) {
        return Err(Error::Domain("bump must be positive".into()));
    }
    let up = f.value(&sp.bumped(bump))?;
    let mid = f.value(sp)?;
    let dn = f.value(&sp.bumped(-bump))?;
    Ok((up - 2.0 * mid + dn) / (bump * bump))
}

pub fn horizontal_derivative<F: NonAnticipativeFunctional + ?Sized>(f: &F, sp: &StoppedPath, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::Domain("dt must be positive".into()));
    }
    let ahead = sp.extended(dt)?;
    Ok((f.value(&ahead)? - f.value(sp)?) / dt)
}

/// Finite-difference bundle (the horizontal step falls back to a backward
/// difference at the horizon).
pub fn finite_difference_bundle<F: NonAnticipativeFunctional + ?Sized>(
    f: &F,
    sp: &StoppedPath,
    bump: f64,
    dt: f64,
) -> Result<DerivativeBundle> {
    let value = f.value(sp)?;
    let up = f.value(&sp.bumped(bump))?;
    let dn = f.value(&sp.bumped(-bump))?;
    let horiz = match sp.extended(dt) {
        Ok(ahead) => (f.value(&ahead)? - value) / dt,
        Err(_) => 0.0,
    };
    Ok(DerivativeBundle {
        value,
        grad_v: (up - dn) / (2.0 * bump),
        hess_v: (up - 2.0 * value + dn) / (bump * bump),
        horiz,
        bump,
        method: DerivativeMethod::FiniteDifference,
    })
}

/// Closed-form bundle when available, finite differences otherwise.
pub fn derivatives<F: NonAnticipativeFunctional + ?Sized>(f: &F, sp: &StoppedPath, dt: f64) -> Result<DerivativeBundle> {
    match f.sensitivities(sp) {
        Some(r) => r,
        None => finite_difference_bundle(f, sp, default_bump(sp), dt),
    }
}

/// Riemann sums along every level, with the limit and a convergence flag.
#[derive(Debug, Clone, Serialize)]
pub struct FoellmerResult {
    pub per_level: Vec<f64>,
    pub limit: f64,
    pub converged: bool,
}

/// Left-endpoint Riemann sums sum_i phi(t_i, omega_{t_i}) (omega(t_{i+1}) - omega(t_i)).
/// Convergence: the last two level-to-level changes are below `tol`
/// relative to max(1, |limit|).
pub fn foellmer_integral<F: NonAnticipativeFunctional + ?Sized>(
    phi: &F,
    path: &SampledPath,
    partitions: &DyadicPartitionSequence,
    tol: f64,
) -> Result<FoellmerResult> {
    let v = path.values();
    let mut per_level = Vec::with_capacity(partitions.max_level as usize);
    for n in 1..=partitions.max_level {
        let idx = partitions.indices(path, n)?;
        let mut s = 0.0;
        for w in idx.windows(2) {
            let sp = StoppedPath::at_index(path, w[0]);
            s += phi.value(&sp)? * (v[w[1]] - v[w[0]]);
        }
        per_level.push(s);
    }
    let n = per_level.len();
    let limit = per_level[n - 1];
    let scale = limit.abs().max(1.0);
    let converged = n >= 3
        && (per_level[n - 1] - per_level[n - 2]).abs() < tol * scale
        && (per_level[n - 2] - per_level[n - 3]).abs() < tol * scale;
    Ok(FoellmerResult { per_level, limit, converged })
}

/// F(T) - F(0) - int grad F d omega - int DF dt - 1/2 int hess F d[omega]
/// on the finest level. `bump` None uses the default relative bump, `dt`
/// None uses one native grid cell.
pub fn change_of_variable_residual<F: NonAnticipativeFunctional + ?Sized>(
    f: &F,
    path: &SampledPath,
    partitions: &DyadicPartitionSequence,
    bump: Option<f64>,
    dt: Option<f64>,
) -> Result<f64> {
    let idx = partitions.indices(path, partitions.max_level)?;
    let v = path.values();
    let times = path.times();
    let native = times[1] - times[0];
    let step = dt.unwrap_or(native);
    let mut integral = 0.0;
    for w in idx.windows(2) {
        let sp = StoppedPath::at_index(path, w[0]);
        let h = bump.unwrap_or_else(|| default_bump(&sp));
        let b = finite_difference_bundle(f, &sp, h, step)?;
        let d = v[w[1]] - v[w[0]];
        let cell = times[w[1]] - times[w[0]];
        integral += b.grad_v * d + b.horiz * cell + 0.5 * b.hess_v * d * d;
    }
    let first = f.value(&StoppedPath::at_index(path, 0))?;
    let last = f.value(&StoppedPath::at_index(path, path.len() - 1))?;
    Ok(last - first - integral)
}
