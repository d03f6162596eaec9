//! Euler Monte Carlo for local Levy log-prices, plus GBM path generation
//! for the hedging experiments.
//!
//! Every path owns a ChaCha stream selected by its index, so results do not
//! depend on how paths are spread over threads.

use crate::error::{Error, Result};
use crate::levy::{Jumps, LocalLevyModel};
use crate::path::SampledPath;
use crate::pricing::BSModelSpec;
use crate::pricing::black::black_call;
use crate::quad::{adaptive_gk, pairwise_sum};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub n_paths: usize,
    #[serde(default = "default_steps")]
    pub steps_per_year: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
    pub horizon: f64,
    /// Upper bound on n_paths x steps; None means unlimited.
    #[serde(default)]
    pub max_work: Option<u128>,
}

fn default_steps() -> usize {
    250
}

impl MCConfig {
    pub fn new(n_paths: usize, horizon: f64, seed: u64) -> Self {
        MCConfig { n_paths, steps_per_year: 250, seed, antithetic: false, horizon, max_work: None }
    }

    pub fn steps(&self) -> usize {
        ((self.horizon * self.steps_per_year as f64) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.steps_per_year == 0 {
            return Err(Error::Config("n_paths and steps_per_year must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if let Some(cap) = self.max_work {
            let requested = self.n_paths as u128 * self.steps() as u128;
            if requested > cap {
                return Err(Error::ResourceCap { requested, cap });
            }
        }
        Ok(())
    }
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Terminal log-prices X(T) and jump counts, indexed by path.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub x0: f64,
    pub horizon: f64,
    pub rate: f64,
    pub antithetic: bool,
    pub terminal: Vec<f64>,
    pub jump_counts: Vec<u32>,
    /// X(T) of a companion driven by the same shocks with the local variance
    /// frozen at a(x0); its law is a plain Levy process with known call prices.
    pub frozen: Vec<f64>,
    pub frozen_var: f64,
    pub jumps: Jumps,
    pub r0: f64,
}

struct Stepper<'a> {
    model: &'a LocalLevyModel,
    dt: f64,
    r0: f64,
    vg_clock: Option<Gamma<f64>>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a LocalLevyModel, dt: f64) -> Result<Self> {
        let vg_clock = match model.jumps {
            Jumps::VarianceGamma { kappa, .. } => {
                Some(Gamma::new(dt / kappa, kappa).map_err(|e| Error::Model(e.to_string()))?)
            }
            _ => None,
        };
        Ok(Stepper { model, dt, r0: model.r0(), vg_clock })
    }

    /// One Euler step: diffusion with left-point local variance, then the jump.
    /// The frozen companion `xf` takes the same shocks with variance `a0`.
    /// `sign` flips the diffusion shock for antithetic partners.
    fn step(&self, x: f64, xf: f64, a0: f64, rng: &mut ChaCha8Rng, sign: f64) -> (f64, f64, u32) {
        let a = self.model.local_var(x);
        let z: f64 = rng.sample(StandardNormal);
        let z = z * sign;
        let mut next = x + (self.r0 - 0.5 * a) * self.dt + (a * self.dt).sqrt() * z;
        let mut frozen = xf + (self.r0 - 0.5 * a0) * self.dt + (a0 * self.dt).sqrt() * z;
        let mut count = 0;
        let jump = match self.model.jumps {
            Jumps::None => 0.0,
            Jumps::Merton { lambda, m, delta } => {
                count = poisson_inverse(lambda * self.dt, rng.gen::<f64>());
                if count > 0 {
                    let zj: f64 = rng.sample(StandardNormal);
                    let n = count as f64;
                    m * n + delta * n.sqrt() * zj
                } else {
                    0.0
                }
            }
            Jumps::VarianceGamma { theta, rho, .. } => {
                let g = self.vg_clock.as_ref().expect("vg clock").sample(rng);
                let zj: f64 = rng.sample(StandardNormal);
                theta * g + rho * g.sqrt() * zj
            }
        };
        next += jump;
        frozen += jump;
        (next, frozen, count)
    }
}

/// Poisson(mean) draw by inverting the CDF at u.
fn poisson_inverse(mean: f64, u: f64) -> u32 {
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u32;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 {
            break;
        }
    }
    k
}

/// Simulate X(T) from X(0) = x0.
pub fn simulate(model: &LocalLevyModel, x0: f64, cfg: &MCConfig) -> Result<Ensemble> {
    cfg.validate()?;
    model.validate()?;
    let steps = cfg.steps();
    let dt = cfg.horizon / steps as f64;
    let stepper = Stepper::new(model, dt)?;
    let a0 = model.local_var(x0);
    let run = |rng: &mut ChaCha8Rng, sign: f64| {
        let (mut x, mut xf) = (x0, x0);
        let mut jumps = 0u32;
        for _ in 0..steps {
            let (nx, nf, c) = stepper.step(x, xf, a0, rng, sign);
            x = nx;
            xf = nf;
            jumps += c;
        }
        (x, xf, jumps)
    };
    let out: Vec<(f64, f64, u32)> = if cfg.antithetic {
        let pairs = cfg.n_paths.div_ceil(2);
        let mut v: Vec<(f64, f64, u32)> = (0..pairs)
            .into_par_iter()
            .flat_map_iter(|p| {
                let mut rng = path_rng(cfg.seed, p as u64);
                let mut twin = rng.clone();
                let a = run(&mut rng, 1.0);
                let b = run(&mut twin, -1.0);
                [a, b]
            })
            .collect();
        v.truncate(cfg.n_paths);
        v
    } else {
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| run(&mut path_rng(cfg.seed, i as u64), 1.0))
            .collect()
    };
    let mut terminal = Vec::with_capacity(out.len());
    let mut frozen = Vec::with_capacity(out.len());
    let mut jump_counts = Vec::with_capacity(out.len());
    for (x, xf, c) in out {
        terminal.push(x);
        frozen.push(xf);
        jump_counts.push(c);
    }
    Ok(Ensemble {
        x0,
        horizon: cfg.horizon,
        rate: model.rate,
        antithetic: cfg.antithetic,
        terminal,
        jump_counts,
        frozen,
        frozen_var: a0,
        jumps: model.jumps,
        r0: model.r0(),
    })
}

/// Full Euler path of S = exp(X) for path `index`, on the Euler grid.
pub fn simulate_path(model: &LocalLevyModel, x0: f64, cfg: &MCConfig, index: usize) -> Result<SampledPath> {
    cfg.validate()?;
    let steps = cfg.steps();
    let dt = cfg.horizon / steps as f64;
    let stepper = Stepper::new(model, dt)?;
    let mut rng = path_rng(cfg.seed, index as u64);
    let mut x = x0;
    let mut values = Vec::with_capacity(steps + 1);
    values.push(x.exp());
    for _ in 0..steps {
        x = stepper.step(x, x0, 0.0, &mut rng, 1.0).0;
        values.push(x.exp());
    }
    SampledPath::uniform(cfg.horizon, values, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub price: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    pub ci99: (f64, f64),
}

const Z95: f64 = 1.959963984540054;
const Z99: f64 = 2.5758293035489004;

/// Sample mean and standard error; antithetic samples are pair-averaged first.
pub fn mean_and_se(samples: &[f64], antithetic: bool) -> (f64, f64) {
    let paired: Vec<f64>;
    let xs = if antithetic && samples.len() >= 2 {
        paired = samples.chunks(2).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        &paired[..]
    } else {
        samples
    };
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl MCEstimate {
    pub fn from_samples(samples: &[f64], antithetic: bool, scale: f64) -> Self {
        let (m, se) = mean_and_se(samples, antithetic);
        let (price, se) = (m * scale, se * scale);
        MCEstimate {
            price,
            se,
            ci95: (price - Z95 * se, price + Z95 * se),
            ci99: (price - Z99 * se, price + Z99 * se),
        }
    }
}

/// Discounted mean of payoff(S(T)) over the ensemble.
pub fn mc_price_ensemble<F: Fn(f64) -> f64 + Sync>(ens: &Ensemble, payoff: F) -> MCEstimate {
    let samples: Vec<f64> = ens.terminal.par_iter().map(|x| payoff(x.exp())).collect();
    MCEstimate::from_samples(&samples, ens.antithetic, (-ens.rate * ens.horizon).exp())
}

pub fn mc_price<F: Fn(f64) -> f64 + Sync>(model: &LocalLevyModel, s0: f64, payoff: F, cfg: &MCConfig) -> Result<MCEstimate> {
    let ens = simulate(model, s0.ln(), cfg)?;
    Ok(mc_price_ensemble(&ens, payoff))
}

/// Call prices for every strike from one ensemble.
pub fn mc_call_prices(ens: &Ensemble, strikes: &[f64]) -> Vec<MCEstimate> {
    strikes.iter().map(|k| mc_price_ensemble(ens, |s| (s - k).max(0.0))).collect()
}

/// Undiscounted E[(exp(X) - k)+] for the frozen companion at the ensemble horizon.
fn frozen_call(ens: &Ensemble, k: f64) -> Result<f64> {
    let t = ens.horizon;
    let a0 = ens.frozen_var;
    let base = ens.x0 + (ens.r0 - 0.5 * a0) * t;
    // X Gaussian with mean mu and variance v
    let gauss = |mu: f64, v: f64| black_call((mu + 0.5 * v).exp(), k, v);
    match ens.jumps {
        Jumps::None => Ok(gauss(base, a0 * t)),
        Jumps::Merton { lambda, m, delta } => {
            let mean = lambda * t;
            let mut w = (-mean).exp();
            let mut total = 0.0;
            for n in 0..1000 {
                if n > 0 {
                    w *= mean / n as f64;
                }
                let nf = n as f64;
                total += w * gauss(base + nf * m, a0 * t + nf * delta * delta);
                if nf > mean && w < 1e-18 {
                    break;
                }
            }
            Ok(total)
        }
        Jumps::VarianceGamma { kappa, theta, rho } => {
            // condition on the gamma clock G(T) ~ Gamma(t / kappa, kappa)
            let shape = t / kappa;
            let norm = statrs::function::gamma::ln_gamma(shape) + shape * kappa.ln();
            let cond = |g: f64| gauss(base + theta * g, a0 * t + rho * rho * g);
            let hi = kappa * (shape + 40.0 * shape.sqrt() + 60.0);
            if shape < 1.0 {
                // g = w^(1/shape) removes the integrable singularity at 0
                let f = |w: f64| {
                    let g = w.powf(1.0 / shape);
                    cond(g) * (-g / kappa - norm).exp() / shape
                };
                adaptive_gk(f, 0.0, hi.powf(shape), 1e-14, 1e-12, 4000)
            } else {
                let f = |g: f64| {
                    if g <= 0.0 {
                        return 0.0;
                    }
                    cond(g) * ((shape - 1.0) * g.ln() - g / kappa - norm).exp()
                };
                let mode = kappa * (shape - 1.0);
                let a = adaptive_gk(f, 0.0, mode, 1e-14, 1e-12, 4000)?;
                Ok(a + adaptive_gk(f, mode, hi, 1e-14, 1e-12, 4000)?)
            }
        }
    }
}

/// Call prices using the frozen-coefficient companion as a control variate:
/// its payoff shares the shocks of the simulated path and has a closed-form
/// mean. The regression slope is fitted on the same sample.
pub fn mc_call_prices_controlled(ens: &Ensemble, strikes: &[f64]) -> Result<Vec<MCEstimate>> {
    let pair = |xs: Vec<f64>| -> Vec<f64> {
        if ens.antithetic && xs.len() >= 2 {
            xs.chunks(2).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
        } else {
            xs
        }
    };
    strikes
        .iter()
        .map(|&k| {
            let known = frozen_call(ens, k)?;
            let pay = pair(ens.terminal.par_iter().map(|x| (x.exp() - k).max(0.0)).collect());
            let control = pair(ens.frozen.par_iter().map(|x| (x.exp() - k).max(0.0) - known).collect());
            let n = pay.len() as f64;
            let p_mean = pairwise_sum(&pay) / n;
            let c_mean = pairwise_sum(&control) / n;
            let cov: Vec<f64> = pay.iter().zip(&control).map(|(p, c)| (p - p_mean) * (c - c_mean)).collect();
            let var: Vec<f64> = control.iter().map(|c| (c - c_mean).powi(2)).collect();
            let var = pairwise_sum(&var);
            let b = if var > 0.0 { pairwise_sum(&cov) / var } else { 0.0 };
            let adjusted: Vec<f64> = pay.iter().zip(&control).map(|(p, c)| p - b * c).collect();
            Ok(MCEstimate::from_samples(&adjusted, false, (-ens.rate * ens.horizon).exp()))
        })
        .collect()
}

/// Empirical E[exp(i xi X(T))] with the standard error of the complex mean.
pub fn empirical_charfun(ens: &Ensemble, xis: &[f64]) -> Vec<(C64, f64)> {
    xis.iter()
        .map(|&xi| {
            let re: Vec<f64> = ens.terminal.iter().map(|x| (xi * x).cos()).collect();
            let im: Vec<f64> = ens.terminal.iter().map(|x| (xi * x).sin()).collect();
            let (mr, sr) = mean_and_se(&re, ens.antithetic);
            let (mi, si) = mean_and_se(&im, ens.antithetic);
            (C64::new(mr, mi), (sr * sr + si * si).sqrt())
        })
        .collect()
}

/// Exact lognormal path under `model` on 2^level cells, for path `index`.
pub fn gbm_path(model: &BSModelSpec, s0: f64, level: u32, seed: u64, index: usize) -> Result<SampledPath> {
    if !(s0 > 0.0) {
        return Err(Error::Domain("initial price must be positive".into()));
    }
    let n = 1usize << level;
    let h = model.horizon / n as f64;
    let mut rng = path_rng(seed, index as u64);
    let mut values = Vec::with_capacity(n + 1);
    let mut x = s0.ln();
    values.push(s0);
    for k in 0..n {
        let a = model.integrated_variance(k as f64 * h, (k + 1) as f64 * h);
        let z: f64 = rng.sample(StandardNormal);
        x += -0.5 * a + a.sqrt() * z;
        values.push(x.exp());
    }
    SampledPath::uniform(model.horizon, values, true)
}

/// Stream paths as `path_id,time,value` rows.
pub fn write_paths_csv<W: Write>(w: W, paths: impl IntoIterator<Item = (usize, SampledPath)>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path_id", "time", "value"])?;
    for (id, p) in paths {
        for (t, v) in p.times().iter().zip(p.values()) {
            out.serialize((id, t, v))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read `path_id,time,value` rows back into price paths, in order of first appearance.
pub fn read_paths_csv<R: Read>(r: R) -> Result<Vec<(usize, SampledPath)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut groups: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for rec in rdr.deserialize() {
        let (id, t, v): (usize, f64, f64) = rec?;
        match groups.last_mut() {
            Some(g) if g.0 == id => {
                g.1.push(t);
                g.2.push(v);
            }
            _ => groups.push((id, vec![t], vec![v])),
        }
    }
    groups.into_iter().map(|(id, t, v)| Ok((id, SampledPath::new(t, v, true)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(rate: f64) -> LocalLevyModel {
        LocalLevyModel::cev(0.2, 1.0, Jumps::None, rate).unwrap()
    }

    #[test]
    fn martingale_under_flat_vol() {
        let cfg = MCConfig::new(20_000, 1.0, 3);
        let e = mc_price(&bs(0.05), 1.0, |s| s, &cfg).unwrap();
        assert!((e.price - 1.0).abs() < 3.0 * e.se, "{e:?}");
    }

    #[test]
    fn poisson_counts() {
        let m = LocalLevyModel::cev(0.2, 1.0, Jumps::Merton { lambda: 0.3, m: -0.1, delta: 0.4 }, 0.0).unwrap();
        let cfg = MCConfig::new(20_000, 1.0, 11);
        let ens = simulate(&m, 0.0, &cfg).unwrap();
        let c: Vec<f64> = ens.jump_counts.iter().map(|&c| c as f64).collect();
        let (mean, se) = mean_and_se(&c, false);
        assert!((mean - 0.3).abs() < 3.0 * se, "{mean} {se}");
    }

    #[test]
    fn trivial_payoffs() {
        let cfg = MCConfig::new(1000, 0.5, 1);
        let z = mc_price(&bs(0.05), 1.0, |_| 0.0, &cfg).unwrap();
        assert_eq!((z.price, z.se, z.ci95, z.ci99), (0.0, 0.0, (0.0, 0.0), (0.0, 0.0)));
        let d = mc_price(&bs(0.05), 1.0, |s| if s > 0.0 { 1.0 } else { 0.0 }, &cfg).unwrap();
        assert_eq!(d.price, (-0.05f64 * 0.5).exp());
        assert_eq!(d.se, 0.0);
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let m = LocalLevyModel::reference_vg();
        let mut cfg = MCConfig::new(500, 0.25, 9);
        cfg.antithetic = true;
        let a = simulate(&m, 0.0, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| simulate(&m, 0.0, &cfg).unwrap());
        assert_eq!(a.terminal, b.terminal);
        // serial replay of one path
        let single = simulate_path(&m, 0.0, &MCConfig { antithetic: false, ..cfg }, 4).unwrap();
        let c = simulate(&m, 0.0, &MCConfig { antithetic: false, ..cfg }).unwrap();
        assert_eq!(*single.values().last().unwrap(), c.terminal[4].exp());
    }

    #[test]
    fn frozen_companion_mean_is_exact() {
        // the companion has constant coefficients, so its simulated law is exact
        for m in [LocalLevyModel::reference_merton(), LocalLevyModel::reference_vg(), bs(0.03)] {
            let ens = simulate(&m, 0.0, &MCConfig::new(40_000, 0.5, 17)).unwrap();
            for k in [0.8, 1.0, 1.3] {
                let pay: Vec<f64> = ens.frozen.iter().map(|x| (x.exp() - k).max(0.0)).collect();
                let (mean, se) = mean_and_se(&pay, false);
                let known = frozen_call(&ens, k).unwrap();
                assert!((mean - known).abs() < 4.0 * se, "{:?} k={k}: {mean} vs {known} (se {se})", m.jumps);
            }
        }
    }

    #[test]
    fn control_variate_agrees_with_plain_estimate() {
        let m = LocalLevyModel::reference_vg();
        let ens = simulate(&m, 0.0, &MCConfig { antithetic: true, ..MCConfig::new(20_000, 0.25, 5) }).unwrap();
        let plain = mc_call_prices(&ens, &[0.9, 1.0, 1.1]);
        let cv = mc_call_prices_controlled(&ens, &[0.9, 1.0, 1.1]).unwrap();
        for (p, c) in plain.iter().zip(&cv) {
            assert!(c.se < p.se);
            assert!((p.price - c.price).abs() < 3.0 * p.se, "{p:?} {c:?}");
        }
    }

    #[test]
    fn charfun_at_zero_and_conjugate() {
        let cfg = MCConfig::new(2000, 0.25, 5);
        let ens = simulate(&LocalLevyModel::reference_merton(), 0.0, &cfg).unwrap();
        let v = empirical_charfun(&ens, &[0.0, 1.3, -1.3]);
        assert_eq!(v[0].0, C64::new(1.0, 0.0));
        assert_eq!(v[1].0, v[2].0.conj());
    }

    #[test]
    fn resource_cap() {
        let mut cfg = MCConfig::new(1000, 1.0, 1);
        cfg.max_work = Some(1000);
        assert!(matches!(simulate(&bs(0.0), 0.0, &cfg), Err(Error::ResourceCap { .. })));
    }

    #[test]
    fn paths_csv_round_trip() {
        let m = BSModelSpec::constant(0.2, 1.0).unwrap();
        let paths: Vec<_> = (0..3).map(|i| (i, gbm_path(&m, 1.0, 4, 2, i).unwrap())).collect();
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, paths.clone()).unwrap();
        let back = read_paths_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[2].1.values(), paths[2].1.values());
    }
}
