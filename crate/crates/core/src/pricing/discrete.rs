use super::model::BSModelSpec;
use super::PathPayoff;
use crate::error::{Error, Result};
use crate::functional::{DerivativeBundle, DerivativeMethod, NonAnticipativeFunctional, StoppedPath};
use crate::path::SampledPath;
use crate::quad::Rule;
use serde::{Deserialize, Serialize};

pub const MAX_REMAINING_FIXINGS: usize = 4;

/// Payoff h(x_1, ..., x_n) of the fixings, with its gradient and Hessian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MonitorFunction {
    /// prod x_j
    Product,
    /// sum w_j x_j
    Linear { weights: Vec<f64> },
    /// sum w_j x_j^2
    Quadratic { weights: Vec<f64> },
    /// w log(1 + exp((mean(x) - K) / w)): smooth call on the average
    SoftCall { strike: f64, width: f64 },
    /// (mean(x) - K)^+, kinked; derivatives are best-effort
    AverageCall { strike: f64 },
}

impl MonitorFunction {
    pub fn value(&self, x: &[f64]) -> f64 {
        let n = x.len() as f64;
        match self {
            MonitorFunction::Product => x.iter().product(),
            MonitorFunction::Linear { weights } => x.iter().zip(weights).map(|(a, w)| a * w).sum(),
            MonitorFunction::Quadratic { weights } => x.iter().zip(weights).map(|(a, w)| w * a * a).sum(),
            MonitorFunction::SoftCall { strike, width } => {
                let z = (x.iter().sum::<f64>() / n - strike) / width;
                width * softplus(z)
            }
            MonitorFunction::AverageCall { strike } => (x.iter().sum::<f64>() / n - strike).max(0.0),
        }
    }

    /// Gradient into `g` and Hessian (row-major n x n) into `h`.
    pub fn derivatives(&self, x: &[f64], g: &mut [f64], h: &mut [f64]) {
        let n = x.len();
        g.iter_mut().for_each(|v| *v = 0.0);
        h.iter_mut().for_each(|v| *v = 0.0);
        match self {
            MonitorFunction::Product => {
                for i in 0..n {
                    g[i] = (0..n).filter(|&k| k != i).map(|k| x[k]).product();
                    for j in 0..n {
                        if i != j {
                            h[i * n + j] = (0..n).filter(|&k| k != i && k != j).map(|k| x[k]).product();
                        }
                    }
                }
            }
            MonitorFunction::Linear { weights } => g.copy_from_slice(&weights[..n]),
            MonitorFunction::Quadratic { weights } => {
                for i in 0..n {
                    g[i] = 2.0 * weights[i] * x[i];
                    h[i * n + i] = 2.0 * weights[i];
                }
            }
            MonitorFunction::SoftCall { strike, width } => {
                let nf = n as f64;
                let z = (x.iter().sum::<f64>() / nf - strike) / width;
                let s = sigmoid(z);
                let d2 = s * (1.0 - s) / (width * nf * nf);
                g.iter_mut().for_each(|v| *v = s / nf);
                h.iter_mut().for_each(|v| *v = d2);
            }
            MonitorFunction::AverageCall { strike } => {
                let nf = n as f64;
                if x.iter().sum::<f64>() / nf > *strike {
                    g.iter_mut().for_each(|v| *v = 1.0 / nf);
                }
            }
        }
    }

    fn arity_ok(&self, n: usize) -> bool {
        match self {
            MonitorFunction::Linear { weights } | MonitorFunction::Quadratic { weights } => weights.len() == n,
            _ => true,
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Number of Gauss-Hermite nodes per dimension for `dims` random fixings.
pub fn nodes_for(dims: usize) -> usize {
    match dims {
        0..=2 => 40,
        3 => 20,
        _ => 12,
    }
}

/// Claim paying h(omega(t_1), ..., omega(t_n)) at the last fixing date.
#[derive(Debug, Clone)]
pub struct DiscreteMonitor {
    pub model: BSModelSpec,
    pub dates: Vec<f64>,
    pub payoff: MonitorFunction,
}

impl DiscreteMonitor {
    pub fn new(model: BSModelSpec, dates: Vec<f64>, payoff: MonitorFunction) -> Result<Self> {
        if dates.is_empty() || dates.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("fixing dates must be non-empty and increasing".into()));
        }
        if dates[0] <= 0.0 || *dates.last().expect("non-empty") > model.horizon {
            return Err(Error::Domain("fixing dates must lie in (0, T]".into()));
        }
        if !payoff.arity_ok(dates.len()) {
            return Err(Error::Domain("payoff weights do not match the number of fixings".into()));
        }
        Ok(DiscreteMonitor { model, dates, payoff })
    }

    /// Value and vertical/horizontal derivatives at the stopped path.
    pub fn evaluate(&self, sp: &StoppedPath) -> Result<DerivativeBundle> {
        let t = sp.time();
        let w = sp.current();
        if !(w > 0.0) {
            return Err(Error::Domain("discrete monitor needs a positive path".into()));
        }
        let n = self.dates.len();
        let eps = 1e-12 * self.model.horizon;
        let mut x = vec![0.0; n];
        // live fixings depend on the current value: those at or after t
        let first_live = self.dates.partition_point(|d| *d < t - eps);
        for (j, d) in self.dates.iter().enumerate().take(first_live) {
            x[j] = sp.value_at(*d);
        }
        let random: Vec<usize> = (first_live..n).filter(|&j| self.dates[j] > t + eps).collect();
        for j in first_live..n {
            x[j] = w;
        }
        let m = random.len();
        if m > MAX_REMAINING_FIXINGS {
            return Err(Error::DimensionCap { remaining: m, cap: MAX_REMAINING_FIXINGS });
        }
        // variance increments between successive random fixings
        let mut prev = t;
        let mut dvar = Vec::with_capacity(m);
        for &j in &random {
            dvar.push(self.model.integrated_variance(prev, self.dates[j]));
            prev = self.dates[j];
        }
        let rule = Rule::gauss_hermite_normal(nodes_for(m));
        let q = rule.nodes.len();
        let total = q.pow(m as u32);
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        let (mut ev, mut eg, mut eh) = (0.0, 0.0, 0.0);
        let mut digits = vec![0usize; m];
        for _ in 0..total {
            let mut weight = 1.0;
            let mut logx = 0.0;
            for (l, &j) in random.iter().enumerate() {
                let z = rule.nodes[digits[l]];
                weight *= rule.weights[digits[l]];
                logx += -0.5 * dvar[l] + dvar[l].sqrt() * z;
                x[j] = w * logx.exp();
            }
            // deterministic live fixings after the last random one cannot occur;
            // fixings at t stay at w
            self.payoff.derivatives(&x, &mut g, &mut h);
            ev += weight * self.payoff.value(&x);
            let mut sg = 0.0;
            let mut sh = 0.0;
            for i in first_live..n {
                sg += g[i] * x[i];
                for k in first_live..n {
                    sh += h[i * n + k] * x[i] * x[k];
                }
            }
            eg += weight * sg;
            eh += weight * sh;
            for d in digits.iter_mut() {
                *d += 1;
                if *d < q {
                    break;
                }
                *d = 0;
            }
        }
        let grad = eg / w;
        let hess = eh / (w * w);
        let sig = self.model.sigma(t.min(self.model.horizon));
        let horiz = if first_live < n { -0.5 * sig * sig * w * w * hess } else { 0.0 };
        Ok(DerivativeBundle {
            value: ev,
            grad_v: grad,
            hess_v: hess,
            horiz,
            bump: 0.0,
            method: DerivativeMethod::ClosedForm,
        })
    }
}

/// Discretely-monitored value with its derivatives.
pub fn discrete_monitor_value(claim: &DiscreteMonitor, sp: &StoppedPath) -> Result<DerivativeBundle> {
    claim.evaluate(sp)
}

impl NonAnticipativeFunctional for DiscreteMonitor {
    fn value(&self, sp: &StoppedPath) -> Result<f64> {
        Ok(self.evaluate(sp)?.value)
    }

    fn sensitivities(&self, sp: &StoppedPath) -> Option<Result<DerivativeBundle>> {
        Some(self.evaluate(sp))
    }
}

impl PathPayoff for DiscreteMonitor {
    fn payoff(&self, path: &SampledPath) -> Result<f64> {
        let x: Vec<f64> = self.dates.iter().map(|d| path.value_at(*d)).collect();
        Ok(self.payoff.value(&x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::finite_difference_bundle;

    fn flat(v: f64) -> SampledPath {
        SampledPath::uniform(1.0, vec![v; 257], true).unwrap()
    }

    #[test]
    fn single_terminal_fixing_is_martingale() {
        let m = BSModelSpec::constant(0.3, 1.0).unwrap();
        let c = DiscreteMonitor::new(m, vec![1.0], MonitorFunction::Linear { weights: vec![1.0] }).unwrap();
        let p = flat(1.3);
        let b = c.evaluate(&StoppedPath::new(&p, 0.25).unwrap()).unwrap();
        assert!((b.value - 1.3).abs() < 1e-12);
        assert!((b.grad_v - 1.0).abs() < 1e-12);
        assert!(b.hess_v.abs() < 1e-12);
    }

    #[test]
    fn product_of_two_fixings() {
        let m = BSModelSpec::constant(0.2, 1.0).unwrap();
        let c = DiscreteMonitor::new(m.clone(), vec![0.5, 1.0], MonitorFunction::Product).unwrap();
        let p = flat(1.1);
        let b = c.evaluate(&StoppedPath::new(&p, 0.0).unwrap()).unwrap();
        // E[S(t1) S(t2)] = S0^2 exp(A(0, t1))
        let exact = 1.21 * m.integrated_variance(0.0, 0.5).exp();
        assert!((b.value - exact).abs() < 1e-12);
        assert!((b.grad_v - 2.0 * exact / 1.1).abs() < 1e-12);
        assert!((b.hess_v - 2.0 * exact / 1.21).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_bumps() {
        let m = BSModelSpec::constant(0.25, 1.0).unwrap();
        let c = DiscreteMonitor::new(m, vec![0.3, 0.6, 1.0], MonitorFunction::SoftCall { strike: 1.0, width: 0.05 })
            .unwrap();
        let p = flat(1.0);
        let sp = StoppedPath::new(&p, 0.1).unwrap();
        let b = c.evaluate(&sp).unwrap();
        let fd = finite_difference_bundle(&c, &sp, 1e-3, 1e-4).unwrap();
        assert!((b.grad_v - fd.grad_v).abs() < 1e-6, "{} {}", b.grad_v, fd.grad_v);
        assert!((b.hess_v - fd.hess_v).abs() < 1e-3, "{} {}", b.hess_v, fd.hess_v);
        // theta from the pricing equation against a forward difference
        assert!((b.horiz - fd.horiz).abs() < 2e-3 * b.horiz.abs().max(1.0), "{} {}", b.horiz, fd.horiz);
    }

    #[test]
    fn after_last_fixing() {
        let m = BSModelSpec::constant(0.2, 1.0).unwrap();
        let c = DiscreteMonitor::new(m, vec![0.25, 0.5], MonitorFunction::Product).unwrap();
        let p = SampledPath::from_fn(1.0, 8, true, |t| 1.0 + t).unwrap();
        let b = c.evaluate(&StoppedPath::new(&p, 0.75).unwrap()).unwrap();
        assert!((b.value - 1.25 * 1.5).abs() < 1e-12);
        assert_eq!((b.grad_v, b.hess_v), (0.0, 0.0));
    }

    #[test]
    fn dimension_cap() {
        let m = BSModelSpec::constant(0.2, 1.0).unwrap();
        let c = DiscreteMonitor::new(m, vec![0.2, 0.4, 0.6, 0.8, 1.0], MonitorFunction::Product).unwrap();
        let p = flat(1.0);
        assert!(matches!(
            c.evaluate(&StoppedPath::new(&p, 0.0).unwrap()),
            Err(Error::DimensionCap { remaining: 5, .. })
        ));
        assert!(c.evaluate(&StoppedPath::new(&p, 0.2).unwrap()).is_ok());
    }
}
