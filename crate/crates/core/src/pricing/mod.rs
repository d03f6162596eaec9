//! Pricing functionals under Black-Scholes with time-dependent volatility
//! (forward prices, zero rate).

pub mod asian;
pub mod barrier;
pub mod black;
pub mod discrete;
pub mod european;
pub mod model;

pub use asian::{arithmetic_asian_value, geometric_asian_value, ArithmeticAsian, AsianGrid, GeometricAsian};
pub use barrier::{barrier_value_fd, BarrierGrid, BarrierSurface, UpOutBarrier};
pub use black::{black_call, bs_call, implied_vol};
pub use discrete::{discrete_monitor_value, DiscreteMonitor, MonitorFunction};
pub use european::{european_value, European, Greeks, OptionKind};
pub use model::BSModelSpec;

use crate::error::{Error, Result};
use crate::functional::NonAnticipativeFunctional;
use crate::path::SampledPath;
use serde::{Deserialize, Serialize};

/// Terminal payoff H(omega) read off a full path.
pub trait PathPayoff {
    fn payoff(&self, path: &SampledPath) -> Result<f64>;
}

/// A pricing functional that also knows its payoff.
pub trait PricingFunctional: NonAnticipativeFunctional + PathPayoff {}

impl<T: NonAnticipativeFunctional + PathPayoff> PricingFunctional for T {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PayoffSpec {
    EuropeanCall { strike: f64 },
    EuropeanPut { strike: f64 },
    DiscreteMonitor { dates: Vec<f64>, function: MonitorFunction },
    GeometricAsianCall { strike: f64 },
    ArithmeticAsianCall { strike: f64 },
    UpOutCall { strike: f64, barrier: f64 },
}

impl PayoffSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match self {
            PayoffSpec::EuropeanCall { strike }
            | PayoffSpec::EuropeanPut { strike }
            | PayoffSpec::GeometricAsianCall { strike }
            | PayoffSpec::ArithmeticAsianCall { strike }
                if !(*strike > 0.0) =>
            {
                bad("strike must be positive")
            }
            PayoffSpec::UpOutCall { strike, barrier } if !(*strike > 0.0 && barrier > strike) => {
                bad("need 0 < strike < barrier")
            }
            _ => Ok(()),
        }
    }

    /// Build the functional; `s_ref` sizes grids for PDE-based claims.
    pub fn build(&self, model: &BSModelSpec, s_ref: f64) -> Result<Box<dyn PricingFunctional>> {
        self.validate()?;
        let m = model.clone();
        Ok(match self {
            PayoffSpec::EuropeanCall { strike } => Box::new(European { model: m, kind: OptionKind::Call, strike: *strike }),
            PayoffSpec::EuropeanPut { strike } => Box::new(European { model: m, kind: OptionKind::Put, strike: *strike }),
            PayoffSpec::DiscreteMonitor { dates, function } => {
                Box::new(DiscreteMonitor::new(m, dates.clone(), function.clone())?)
            }
            PayoffSpec::GeometricAsianCall { strike } => Box::new(GeometricAsian { model: m, strike: *strike }),
            PayoffSpec::ArithmeticAsianCall { strike } => Box::new(ArithmeticAsian::new(m, *strike)),
            PayoffSpec::UpOutCall { strike, barrier } => {
                if !(*barrier > s_ref) {
                    return Err(Error::Config("barrier must lie above the initial spot".into()));
                }
                Box::new(UpOutBarrier::new(m, *strike, *barrier, s_ref)?)
            }
        })
    }
}
