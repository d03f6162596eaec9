use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Black-Scholes model on forwards (r = 0) with piecewise-constant volatility.
/// `sigmas[j]` applies on [knots[j], knots[j+1]) with knots[0] = 0 and the
/// last piece running to the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSModelSpec {
    pub knots: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub horizon: f64,
}

impl BSModelSpec {
    pub fn constant(sigma: f64, horizon: f64) -> Result<Self> {
        Self::piecewise(vec![0.0], vec![sigma], horizon)
    }

    pub fn piecewise(knots: Vec<f64>, sigmas: Vec<f64>, horizon: f64) -> Result<Self> {
        if knots.len() != sigmas.len() || knots.is_empty() {
            return Err(Error::Model("need one volatility per knot".into()));
        }
        if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Model("knots must start at 0 and increase".into()));
        }
        if !(horizon > 0.0) || *knots.last().expect("non-empty") >= horizon {
            return Err(Error::Model("knots must lie inside [0, horizon)".into()));
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Model("volatilities must be finite and non-negative".into()));
        }
        Ok(BSModelSpec { knots, sigmas, horizon })
    }

    pub fn sigma(&self, t: f64) -> f64 {
        let j = self.knots.partition_point(|k| *k <= t).saturating_sub(1);
        self.sigmas[j]
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas.iter().cloned().fold(0.0, f64::max)
    }

    /// Integral over [t, u] of w(s) sigma(s)^2 for a polynomial weight in (T - s),
    /// via exact antiderivatives per piece: returns (int s^2, int (T-s) s^2, int (T-s)^2 s^2).
    fn moments(&self, t: f64, u: f64) -> (f64, f64, f64) {
        let big_t = self.horizon;
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (j, s) in self.sigmas.iter().enumerate() {
            let lo = self.knots[j].max(t);
            let hi = self.knots.get(j + 1).copied().unwrap_or(f64::INFINITY).min(u);
            if hi <= lo {
                continue;
            }
            let v = s * s;
            let (a, b) = (big_t - hi, big_t - lo);
            m0 += v * (hi - lo);
            m1 += v * (b * b - a * a) / 2.0;
            m2 += v * (b * b * b - a * a * a) / 3.0;
        }
        (m0, m1, m2)
    }

    /// A(t, u) = int_t^u sigma(s)^2 ds.
    pub fn integrated_variance(&self, t: f64, u: f64) -> f64 {
        self.moments(t, u).0
    }

    /// (int_t^T (T-s) sigma^2 ds, int_t^T (T-s)^2 sigma^2 ds)
    pub fn weighted_variances(&self, t: f64) -> (f64, f64) {
        let (_, m1, m2) = self.moments(t, self.horizon);
        (m1, m2)
    }
}
