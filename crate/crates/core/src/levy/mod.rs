//! Local Levy models: characteristic-function expansions, the Merton
//! density expansion, Fourier pricing and implied volatility.

pub mod convergence;
pub mod density;
pub mod expansion;
pub mod lewis;
pub mod model;

pub use convergence::{convergence_order_scan, ConvergenceRow, ConvergenceScan};
pub use density::{merton_density, MertonDensityExpansion, DEFAULT_TRUNCATION};
pub use expansion::{charfun_approx, expansion_terms, g_hat, CharFunExpansion, ExpansionPoint, MAX_ORDER};
pub use lewis::{lewis_call, lewis_price, DEFAULT_GAMMA};
pub use model::{Jumps, LocalLevyModel, LocalVol, PsiJet};

use crate::error::Result;

/// Black-Scholes implied volatility of a discounted call price.
pub fn implied_vol(price: f64, strike: f64, tau: f64, forward: f64, rate: f64) -> Result<f64> {
    crate::pricing::black::implied_vol(price, strike, tau, forward, rate)
}
