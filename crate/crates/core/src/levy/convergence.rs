use super::lewis::{lewis_price, DEFAULT_GAMMA};
use super::model::LocalLevyModel;
use crate::error::Result;
use crate::mc::{mc_call_prices_controlled, simulate, MCConfig, MCEstimate};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub maturity: f64,
    pub mc: MCEstimate,
    /// expansion price for orders 0..=max_order
    pub prices: Vec<f64>,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceScan {
    pub strike: f64,
    pub rows: Vec<ConvergenceRow>,
    /// log-log slope of |error| against maturity per order; None with fewer
    /// than two points above the noise floor
    pub slopes: Vec<Option<f64>>,
    pub noise_multiple: f64,
}

impl ConvergenceScan {
    /// Whether |error| at (row, order) clears `noise_multiple` MC standard errors.
    pub fn above_noise(&self, row: usize, order: usize) -> bool {
        let r = &self.rows[row];
        r.errors[order].abs() > self.noise_multiple * r.mc.se
    }

    /// Order `order + 1` is further from every reference value within
    /// `noise_multiple` standard errors of the MC price than order `order`.
    /// Ties (orders 0 and 1 at the money) never count.
    pub fn order_worsens(&self, row: usize, order: usize) -> bool {
        let r = &self.rows[row];
        let band = self.noise_multiple * r.mc.se;
        let worse = |x: f64| (r.prices[order + 1] - x).abs() > (r.prices[order] - x).abs();
        worse(r.mc.price - band) && worse(r.mc.price + band)
    }
}

/// |price_n - price_MC| against maturity for orders 0..=max_order.
/// `cfg.horizon` is overwritten with each maturity.
pub fn convergence_order_scan(
    model: &LocalLevyModel,
    s0: f64,
    strike: f64,
    maturities: &[f64],
    max_order: usize,
    cfg: &MCConfig,
) -> Result<ConvergenceScan> {
    let noise_multiple = 3.0;
    let mut rows = Vec::with_capacity(maturities.len());
    for &t in maturities {
        let ens = simulate(model, s0.ln(), &MCConfig { horizon: t, ..*cfg })?;
        let mc = mc_call_prices_controlled(&ens, &[strike])?[0];
        let prices = (0..=max_order)
            .map(|n| lewis_price(model, n, strike, 0.0, s0, t, DEFAULT_GAMMA))
            .collect::<Result<Vec<_>>>()?;
        let errors = prices.iter().map(|p| p - mc.price).collect();
        rows.push(ConvergenceRow { maturity: t, mc, prices, errors });
    }
    let slopes = (0..=max_order)
        .map(|n| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.errors[n].abs() > noise_multiple * r.mc.se)
                .map(|r| (r.maturity.ln(), r.errors[n].abs().ln()))
                .collect();
            slope(&pts)
        })
        .collect();
    Ok(ConvergenceScan { strike, rows, slopes, noise_multiple })
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
