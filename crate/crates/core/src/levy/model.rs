use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Local variance a(x) = sigma(x)^2 in log-price coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LocalVol {
    /// a(x) = sigma0^2 exp(2 (beta - 1) x)
    Cev { sigma0: f64, beta: f64 },
    /// a(x) = alpha_0 + 2 sum_{k>=1} alpha_k (x - basepoint)^k
    Taylor { alphas: Vec<f64>, basepoint: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Jumps {
    None,
    Merton { lambda: f64, m: f64, delta: f64 },
    VarianceGamma { kappa: f64, theta: f64, rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLevyModel {
    pub local_vol: LocalVol,
    pub jumps: Jumps,
    pub rate: f64,
}

/// psi and its first four derivatives at one point.
pub type PsiJet = [C64; 5];

impl LocalLevyModel {
    pub fn new(local_vol: LocalVol, jumps: Jumps, rate: f64) -> Result<Self> {
        let m = LocalLevyModel { local_vol, jumps, rate };
        m.validate()?;
        Ok(m)
    }

    pub fn cev(sigma0: f64, beta: f64, jumps: Jumps, rate: f64) -> Result<Self> {
        Self::new(LocalVol::Cev { sigma0, beta }, jumps, rate)
    }

    /// CEV-Merton model with the parameters of the reference price table.
    pub fn reference_merton() -> Self {
        Self::cev(0.2, 0.5, Jumps::Merton { lambda: 0.3, m: -0.1, delta: 0.4 }, 0.05)
            .expect("valid")
    }

    /// CEV-Variance-Gamma model with the parameters of the reference price table.
    pub fn reference_vg() -> Self {
        Self::cev(0.2, 0.5, Jumps::VarianceGamma { kappa: 0.15, theta: -0.1, rho: 0.2 }, 0.05)
            .expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rate.is_finite() {
            return Err(Error::Model("rate must be finite".into()));
        }
        match &self.local_vol {
            LocalVol::Cev { sigma0, beta } => {
                if !(*sigma0 > 0.0 && sigma0.is_finite()) {
                    return Err(Error::Model(format!("sigma0 must be positive, got {sigma0}")));
                }
                if !(0.0..=1.0).contains(beta) {
                    return Err(Error::Model(format!("beta must lie in [0,1], got {beta}")));
                }
            }
            LocalVol::Taylor { alphas, basepoint } => {
                if alphas.is_empty() || !(alphas[0] > 0.0) {
                    return Err(Error::Model("alpha_0 must be positive".into()));
                }
                if alphas.iter().any(|a| !a.is_finite()) || !basepoint.is_finite() {
                    return Err(Error::Model("Taylor coefficients must be finite".into()));
                }
            }
        }
        match self.jumps {
            Jumps::None => {}
            Jumps::Merton { lambda, m, delta } => {
                if !(lambda >= 0.0) || !m.is_finite() || !(delta > 0.0) {
                    return Err(Error::Model("Merton jumps need lambda >= 0, delta > 0".into()));
                }
            }
            Jumps::VarianceGamma { kappa, theta, rho } => {
                if !(kappa > 0.0) || !theta.is_finite() || !(rho > 0.0) {
                    return Err(Error::Model("VG jumps need kappa > 0, rho > 0".into()));
                }
                if 1.0 - kappa * (theta + 0.5 * rho * rho) <= 0.0 {
                    return Err(Error::Model(
                        "VG parameters violate 1 - kappa (theta + rho^2/2) > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Local variance a(x).
    pub fn local_var(&self, x: f64) -> f64 {
        match &self.local_vol {
            LocalVol::Cev { sigma0, beta } => sigma0 * sigma0 * (2.0 * (beta - 1.0) * x).exp(),
            LocalVol::Taylor { alphas, basepoint } => {
                let d = x - basepoint;
                let mut acc = 0.0;
                for a in alphas[1..].iter().rev() {
                    acc = (acc + 2.0 * a) * d;
                }
                (alphas[0] + acc).max(0.0)
            }
        }
    }

    /// Taylor coefficients alpha_0..alpha_4 of a(x) about `xbar`
    /// (alpha_0 = a(xbar), alpha_k = a^(k)(xbar) / (2 k!)).
    pub fn alphas(&self, xbar: f64) -> [f64; 5] {
        let mut out = [0.0; 5];
        match &self.local_vol {
            LocalVol::Cev { sigma0, beta } => {
                let c = 2.0 * (beta - 1.0);
                let base = sigma0 * sigma0 * (c * xbar).exp();
                out[0] = base;
                let mut fact = 1.0;
                let mut pow = 1.0;
                for (k, o) in out.iter_mut().enumerate().skip(1) {
                    fact *= k as f64;
                    pow *= c;
                    *o = base * pow / (2.0 * fact);
                }
            }
            LocalVol::Taylor { alphas, basepoint } => {
                // re-centre the polynomial a(x) = sum c_j (x - b)^j at xbar
                let coeffs: Vec<f64> = alphas
                    .iter()
                    .enumerate()
                    .map(|(j, a)| if j == 0 { *a } else { 2.0 * a })
                    .collect();
                let d = xbar - basepoint;
                for (k, o) in out.iter_mut().enumerate() {
                    // k-th derivative / k! at xbar
                    let mut s = 0.0;
                    for (j, c) in coeffs.iter().enumerate().skip(k) {
                        s += c * binom(j, k) * d.powi((j - k) as i32);
                    }
                    *o = if k == 0 { s } else { s / 2.0 };
                }
            }
        }
        out
    }

    /// Drift r_0 of the compound-Poisson / closed-form representation.
    pub fn r0(&self) -> f64 {
        match self.jumps {
            Jumps::None => self.rate,
            Jumps::Merton { lambda, m, delta } => {
                self.rate - lambda * ((m + 0.5 * delta * delta).exp() - 1.0)
            }
            Jumps::VarianceGamma { kappa, theta, rho } => {
                self.rate + (1.0 - kappa * (theta + 0.5 * rho * rho)).ln() / kappa
            }
        }
    }

    /// Drift r_bar of the truncated-compensator representation:
    /// r - int (e^y - 1 - y 1_{|y|<1}) nu(dy).
    pub fn r_bar(&self) -> Result<f64> {
        let lm = self.levy_density();
        match lm {
            None => Ok(self.rate),
            Some(_) => {
                let integral = self.levy_integral(|y| y.exp_m1() - if y.abs() < 1.0 { y } else { 0.0 })?;
                Ok(self.rate - integral)
            }
        }
    }

    /// Density of the Levy measure, if there are jumps.
    pub fn levy_density(&self) -> Option<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        match self.jumps {
            Jumps::None => None,
            Jumps::Merton { lambda, m, delta } => Some(Box::new(move |y: f64| {
                let z = (y - m) / delta;
                lambda * (-0.5 * z * z).exp() / (delta * (2.0 * std::f64::consts::PI).sqrt())
            })),
            Jumps::VarianceGamma { kappa, .. } => {
                let (l1, l2) = self.vg_rates().expect("vg");
                Some(Box::new(move |y: f64| {
                    if y > 0.0 {
                        (-l1 * y).exp() / (kappa * y)
                    } else if y < 0.0 {
                        (l2 * y).exp() / (kappa * y.abs())
                    } else {
                        0.0
                    }
                }))
            }
        }
    }

    /// Exponential decay rates (lambda_1, lambda_2) of the VG Levy measure.
    pub fn vg_rates(&self) -> Option<(f64, f64)> {
        match self.jumps {
            Jumps::VarianceGamma { kappa, theta, rho } => {
                let s = (theta * theta * kappa * kappa / 4.0 + rho * rho * kappa / 2.0).sqrt();
                Some((1.0 / (s + theta * kappa / 2.0), 1.0 / (s - theta * kappa / 2.0)))
            }
            _ => None,
        }
    }

    /// Admissible range of Im(xi) for the characteristic exponent.
    pub fn strip(&self) -> (f64, f64) {
        match self.vg_rates() {
            Some((l1, l2)) => (-l1, l2),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn levy_integral<F: Fn(f64) -> f64>(&self, g: F) -> Result<f64> {
        let dens = match self.levy_density() {
            Some(d) => d,
            None => return Ok(0.0),
        };
        let f = |y: f64| g(y) * dens(y);
        let (lo, hi) = match self.jumps {
            Jumps::Merton { m, delta, .. } => (m - 40.0 * delta, m + 40.0 * delta),
            _ => {
                let (l1, l2) = self.vg_rates().expect("vg");
                (-60.0 / l2, 60.0 / l1)
            }
        };
        // split at the indicator kinks and at the origin
        let mut cuts = vec![lo, -1.0, 0.0, 1.0, hi];
        cuts.retain(|c| *c >= lo && *c <= hi);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += crate::quad::adaptive_gk(f, w[0], w[1], 1e-15, 1e-13, 4000)?;
        }
        Ok(total)
    }

    /// Characteristic exponent psi(xi) and its first four derivatives, with
    /// diffusion coefficient `alpha0`.
    pub fn psi_jet(&self, alpha0: f64, xi: C64) -> Result<PsiJet> {
        let (lo, hi) = self.strip();
        if !(xi.im > lo && xi.im < hi) {
            return Err(Error::StripViolation { xi: format!("{xi}"), lo, hi });
        }
        let i = C64::i();
        let r0 = self.r0();
        let mut out = [
            -0.5 * alpha0 * (xi * xi + i * xi) + i * r0 * xi,
            -0.5 * alpha0 * (2.0 * xi + i) + i * r0,
            C64::new(-alpha0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ];
        match self.jumps {
            Jumps::None => {}
            Jumps::Merton { lambda, m, delta } => {
                let d2 = delta * delta;
                let e = lambda * (i * m * xi - 0.5 * d2 * xi * xi).exp();
                let g1 = i * m - d2 * xi;
                let g1s = g1 * g1;
                out[0] += e - lambda;
                out[1] += e * g1;
                out[2] += e * (g1s - d2);
                out[3] += e * g1 * (g1s - 3.0 * d2);
                out[4] += e * (g1s * g1s - 6.0 * d2 * g1s + 3.0 * d2 * d2);
            }
            Jumps::VarianceGamma { kappa, theta, rho } => {
                let w = 1.0 - i * theta * kappa * xi + 0.5 * rho * rho * kappa * xi * xi;
                let w1 = -i * theta * kappa + rho * rho * kappa * xi;
                let w2 = rho * rho * kappa;
                let u1 = w1 / w;
                let u2 = w2 / w;
                out[0] -= w.ln() / kappa;
                out[1] -= u1 / kappa;
                out[2] -= (u2 - u1 * u1) / kappa;
                out[3] -= (-3.0 * u1 * u2 + 2.0 * u1 * u1 * u1) / kappa;
                out[4] -= (-3.0 * u2 * u2 + 12.0 * u1 * u1 * u2 - 6.0 * u1.powi(4)) / kappa;
            }
        }
        Ok(out)
    }

    /// psi(xi) with the diffusion coefficient frozen at the spot `x`.
    pub fn char_exponent(&self, x: f64, xi: C64) -> Result<PsiJet> {
        self.psi_jet(self.alphas(x)[0], xi)
    }

    /// psi evaluated literally from the truncated-compensator form, by
    /// quadrature against the Levy density. Slow; used as a cross-check.
    pub fn psi_compensated(&self, alpha0: f64, xi: f64) -> Result<C64> {
        let i = C64::i();
        let rbar = self.r_bar()?;
        let re = self.levy_integral(|y| (xi * y).cos() - 1.0)?;
        let im = self.levy_integral(|y| (xi * y).sin() - if y.abs() < 1.0 { xi * y } else { 0.0 })?;
        let xi = C64::new(xi, 0.0);
        Ok(-0.5 * alpha0 * (xi * xi + i * xi) + i * rbar * xi + C64::new(re, im))
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models() -> Vec<LocalLevyModel> {
        vec![
            LocalLevyModel::reference_merton(),
            LocalLevyModel::reference_vg(),
            LocalLevyModel::cev(0.25, 1.0, Jumps::None, 0.03).unwrap(),
        ]
    }

    #[test]
    fn normalisation() {
        for m in models() {
            let a0 = m.alphas(0.0)[0];
            let p0 = m.psi_jet(a0, C64::new(0.0, 0.0)).unwrap()[0];
            assert!(p0.norm() < 1e-15);
            let pm = m.psi_jet(a0, C64::new(0.0, -1.0)).unwrap()[0];
            assert!((pm - m.rate).norm() < 1e-12, "{pm}");
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        for m in models() {
            let a0 = m.alphas(0.1)[0];
            for xi in [0.5, 1.0, 2.0] {
                let z = C64::new(xi, -0.3);
                let jet = m.psi_jet(a0, z).unwrap();
                let h = 1e-2;
                let f = |k: i32| m.psi_jet(a0, z + h * k as f64).unwrap();
                for d in 0..4 {
                    let g = |k: i32| f(k)[d];
                    let fd = (g(-2) - 8.0 * g(-1) + 8.0 * g(1) - g(2)) / (12.0 * h);
                    let rel = (fd - jet[d + 1]).norm() / jet[d + 1].norm().max(1e-3);
                    assert!(rel < 1e-6, "deriv {} at {xi}: {fd} vs {}", d + 1, jet[d + 1]);
                }
            }
        }
    }

    #[test]
    fn cev_alphas() {
        let m = LocalLevyModel::reference_merton();
        let a = m.alphas(0.0);
        assert!((a[0] - 0.04).abs() < 1e-15);
        assert!((a[1] + 0.02).abs() < 1e-15);
        assert!((a[2] - 0.01).abs() < 1e-15);
        assert!((a[3] + 0.04 / 12.0).abs() < 1e-15);
        assert!((a[4] - 0.04 / 48.0).abs() < 1e-15);
    }

    #[test]
    fn taylor_recentring() {
        let lv = LocalVol::Taylor { alphas: vec![0.04, -0.02, 0.01], basepoint: 0.0 };
        let m = LocalLevyModel::new(lv, Jumps::None, 0.0).unwrap();
        let x = 0.3;
        let a = m.alphas(x);
        assert!((a[0] - m.local_var(x)).abs() < 1e-15);
        // derivative: a'(x) = 2(-0.02) + 4(0.01) x
        assert!((a[1] - 0.5 * (-0.04 + 0.04 * x)).abs() < 1e-15);
        assert!((a[2] - 0.01).abs() < 1e-15);
        assert_eq!(a[3], 0.0);
    }

    #[test]
    fn vg_strip_is_enforced() {
        let m = LocalLevyModel::reference_vg();
        let (lo, hi) = m.strip();
        assert!(lo < -1.0 && hi > 0.0);
        assert!(matches!(
            m.psi_jet(0.04, C64::new(0.0, lo - 0.1)),
            Err(Error::StripViolation { .. })
        ));
    }

    #[test]
    fn bad_vg_is_rejected() {
        let j = Jumps::VarianceGamma { kappa: 2.0, theta: 0.5, rho: 0.2 };
        assert!(LocalLevyModel::cev(0.2, 0.5, j, 0.0).is_err());
    }

    #[test]
    fn compensated_form_agrees_for_merton() {
        let m = LocalLevyModel::reference_merton();
        for xi in [0.5, 1.0, 2.0, 5.0] {
            let a = m.psi_jet(0.04, C64::new(xi, 0.0)).unwrap()[0];
            let b = m.psi_compensated(0.04, xi).unwrap();
            assert!((a - b).norm() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn compensated_form_agrees_for_vg() {
        let m = LocalLevyModel::reference_vg();
        for xi in [0.5, 1.0, 2.0] {
            let a = m.psi_jet(0.04, C64::new(xi, 0.0)).unwrap()[0];
            let b = m.psi_compensated(0.04, xi).unwrap();
            assert!((a - b).norm() < 1e-8, "{a} vs {b}");
        }
    }
}
