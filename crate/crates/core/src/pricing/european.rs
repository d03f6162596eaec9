use super::black::black_call_greeks;
use super::model::BSModelSpec;
use super::PathPayoff;
use crate::error::{Error, Result};
use crate::functional::{DerivativeBundle, DerivativeMethod, NonAnticipativeFunctional, StoppedPath};
use crate::path::SampledPath;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Greeks {
    pub value: f64,
    pub delta: f64,
    pub gamma: f64,
    pub theta: f64,
}

/// Black formula with total variance A(t, T); forward convention.
pub fn european_value(model: &BSModelSpec, kind: OptionKind, strike: f64, t: f64, s: f64) -> Result<Greeks> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("spot must be positive, got {s}")));
    }
    if t > model.horizon {
        return Err(Error::Domain(format!("t = {t} is past the horizon {}", model.horizon)));
    }
    let var = model.integrated_variance(t, model.horizon);
    if t == model.horizon || var == 0.0 {
        let itm = match kind {
            OptionKind::Call => s > strike,
            OptionKind::Put => s < strike,
        };
        let (value, delta) = match kind {
            OptionKind::Call => ((s - strike).max(0.0), if itm { 1.0 } else { 0.0 }),
            OptionKind::Put => ((strike - s).max(0.0), if itm { -1.0 } else { 0.0 }),
        };
        return Ok(Greeks { value, delta, gamma: 0.0, theta: 0.0 });
    }
    let (c, d, g, _) = black_call_greeks(s, strike, var);
    let sig = model.sigma(t);
    let theta = -0.5 * sig * sig * s * s * g;
    Ok(match kind {
        OptionKind::Call => Greeks { value: c, delta: d, gamma: g, theta },
        OptionKind::Put => Greeks { value: c - s + strike, delta: d - 1.0, gamma: g, theta },
    })
}

/// European option as a functional of the stopped path.
#[derive(Debug, Clone)]
pub struct European {
    pub model: BSModelSpec,
    pub kind: OptionKind,
    pub strike: f64,
}

impl European {
    pub fn call(model: BSModelSpec, strike: f64) -> Self {
        European { model, kind: OptionKind::Call, strike }
    }
}

impl NonAnticipativeFunctional for European {
    fn value(&self, sp: &StoppedPath) -> Result<f64> {
        Ok(european_value(&self.model, self.kind, self.strike, sp.time(), sp.current())?.value)
    }

    fn sensitivities(&self, sp: &StoppedPath) -> Option<Result<DerivativeBundle>> {
        Some(european_value(&self.model, self.kind, self.strike, sp.time(), sp.current()).map(|g| {
            DerivativeBundle {
                value: g.value,
                grad_v: g.delta,
                hess_v: g.gamma,
                horiz: g.theta,
                bump: 0.0,
                method: DerivativeMethod::ClosedForm,
            }
        }))
    }
}

impl PathPayoff for European {
    fn payoff(&self, path: &SampledPath) -> Result<f64> {
        let s = *path.values().last().expect("non-empty");
        Ok(match self.kind {
            OptionKind::Call => (s - self.strike).max(0.0),
            OptionKind::Put => (self.strike - s).max(0.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{vertical_derivative, vertical_derivative2};

    #[test]
    fn deep_itm_and_terminal() {
        let m = BSModelSpec::constant(0.2, 1.0).unwrap();
        let g = european_value(&m, OptionKind::Call, 1.0, 0.0, 1e6).unwrap();
        assert!((g.value - (1e6 - 1.0)).abs() < 1e-6 * 1e6);
        let g = european_value(&m, OptionKind::Call, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(g.value, 0.0);
        assert!(european_value(&m, OptionKind::Call, 1.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn put_call_parity() {
        let m = BSModelSpec::constant(0.3, 2.0).unwrap();
        let c = european_value(&m, OptionKind::Call, 1.1, 0.5, 0.9).unwrap();
        let p = european_value(&m, OptionKind::Put, 1.1, 0.5, 0.9).unwrap();
        assert!((c.value - p.value - (0.9 - 1.1)).abs() < 1e-14);
        assert_eq!(c.gamma, p.gamma);
    }

    #[test]
    fn closed_form_matches_bumps() {
        let m = BSModelSpec::constant(0.2, 1.0).unwrap();
        let p = SampledPath::uniform(1.0, vec![1.0; 5], true).unwrap();
        let sp = StoppedPath::new(&p, 0.0).unwrap();
        let f = European::call(m, 1.0);
        let b = f.sensitivities(&sp).unwrap().unwrap();
        let fd2 = vertical_derivative2(&f, &sp, 1e-4).unwrap();
        assert!((fd2 - b.hess_v).abs() < 1e-4 * b.hess_v);
        let fd1 = vertical_derivative(&f, &sp, 1e-4).unwrap();
        assert!((fd1 - b.grad_v).abs() < 10.0 * 1e-8 + 1e-8);
    }
}
