//! Adjoint expansion of the characteristic function of a local Levy model.
//!
//! Each correction term factors as G^k(xi) = G^0(xi) * P_k(xi, tau) with
//! G^0 = exp(i xi x + tau psi(xi)) and P_k a polynomial in tau whose
//! coefficients depend on xi, the Taylor coefficients alpha_1..alpha_k and
//! the derivatives of psi. Orders 1 and 2 support a basepoint different from
//! the spot; orders 3 and 4 are implemented for basepoint = spot only.

use super::model::{LocalLevyModel, PsiJet};
use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

pub const MAX_ORDER: usize = 4;

/// Evaluation point of the expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionPoint {
    pub t: f64,
    pub x: f64,
    pub maturity: f64,
    /// Taylor basepoint of the local variance; defaults to `x`.
    pub basepoint: f64,
}

impl ExpansionPoint {
    pub fn new(t: f64, x: f64, maturity: f64) -> Self {
        ExpansionPoint { t, x, maturity, basepoint: x }
    }

    pub fn with_basepoint(mut self, xbar: f64) -> Self {
        self.basepoint = xbar;
        self
    }

    pub fn tau(&self) -> f64 {
        self.maturity - self.t
    }
}

/// Per-order expansion terms at a single xi.
#[derive(Debug, Clone)]
pub struct CharFunExpansion {
    pub xi: C64,
    pub terms: Vec<C64>,
}

impl CharFunExpansion {
    pub fn sum(&self) -> C64 {
        self.terms.iter().sum()
    }

    pub fn partial_sum(&self, n: usize) -> C64 {
        self.terms.iter().take(n + 1).sum()
    }
}

/// Corrections P_1..P_n (so that G^k = G^0 P_k), plus G^0 itself.
pub(crate) struct Factors {
    pub g0: C64,
    pub p: [C64; MAX_ORDER + 1],
}

pub(crate) fn factors(
    model: &LocalLevyModel,
    order: usize,
    pt: &ExpansionPoint,
    xi: C64,
) -> Result<Factors> {
    if order > MAX_ORDER {
        return Err(Error::OrderUnavailable {
            order,
            reason: format!("expansion implemented up to order {MAX_ORDER}"),
        });
    }
    let tau = pt.tau();
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("need t < T, got t={} T={}", pt.t, pt.maturity)));
    }
    let d = pt.x - pt.basepoint;
    if order >= 3 && d != 0.0 {
        return Err(Error::OrderUnavailable {
            order,
            reason: "orders 3 and 4 require the basepoint to equal the spot".into(),
        });
    }
    let al = model.alphas(pt.basepoint);
    let psi = model.psi_jet(al[0], xi)?;
    let i = C64::i();
    let g0 = (i * xi * pt.x + tau * psi[0]).exp();
    let mut p = [C64::new(0.0, 0.0); MAX_ORDER + 1];
    p[0] = C64::new(1.0, 0.0);
    if order >= 1 {
        p[1] = first(&al, &psi, xi, tau, d);
    }
    if order >= 2 {
        p[2] = second(&al, &psi, xi, tau, d);
    }
    if order >= 3 {
        p[3] = third(&al, &psi, xi, tau);
    }
    if order >= 4 {
        p[4] = fourth(&al, &psi, xi, tau);
    }
    Ok(Factors { g0, p })
}

fn first(al: &[f64; 5], psi: &PsiJet, xi: C64, tau: f64, d: f64) -> C64 {
    let i = C64::i();
    let q = xi * (xi + i);
    let a1 = al[1];
    0.5 * i * a1 * psi[1] * q * tau * tau - a1 * q * tau * d
}

fn second(al: &[f64; 5], psi: &PsiJet, xi: C64, tau: f64, d: f64) -> C64 {
    let i = C64::i();
    let q = xi * (xi + i);
    let (a1, a2) = (al[1], al[2]);
    let a11 = a1 * a1;
    let (p1, p2) = (psi[1], psi[2]);
    let s = 2.0 * xi + i;
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let mut v = 0.5 * a2 * p2 * q * t2
        + q * (-a11 * s * p1 - a11 * q * p2 + 2.0 * a2 * p1 * p1) * (t3 / 6.0)
        - a11 * p1 * p1 * q * q * (t2 * t2 / 8.0);
    if d != 0.0 {
        v += d * (0.5 * i * q * (-a11 * s + 2.0 * a2 * p1) * t2 - 0.5 * i * a11 * p1 * q * q * t3);
        v += d * d * (-a2 * q * tau + 0.5 * a11 * q * q * t2);
    }
    v
}

fn horner(coef: &[C64], tau: f64) -> C64 {
    coef.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * tau + c)
}

fn third(al: &[f64; 5], psi: &PsiJet, x: C64, tau: f64) -> C64 {
    let i = C64::i();
    let (a1, a2, a3) = (al[1], al[2], al[3]);
    let (p1, p2, p3) = (psi[1], psi[2], psi[3]);
    let q = x * (i + x);
    let s = i + 2.0 * x;
    let om = (1.0 - i * x) * x;
    let g3 = 0.5 * a3 * om * p3;
    let g4 = i * q / 6.0
        * (2.0 * p1 * (a1 * a2 - 3.0 * a3 * p2) + a1 * a2 * (3.0 * s * p2 + 2.0 * q * p3));
    let g5 = om / 24.0
        * (-8.0 * a1 * a2 * s * p1 * p1
            + 6.0 * a3 * p1.powi(3)
            + a1 * p1 * (a1 * a1 * (-1.0 + 6.0 * q) - 16.0 * a2 * q * p2)
            + a1.powi(3) * q * (3.0 * s * p2 + q * p3));
    let g6 = -i / 12.0 * a1 * q * q * p1 * (a1 * a1 * s * p1 - 2.0 * a2 * p1 * p1 + a1 * a1 * q * p2);
    let g7 = -i / 48.0 * (a1 * q * p1).powi(3);
    // g_j multiplies tau^(j-1)
    let z = C64::new(0.0, 0.0);
    horner(&[z, z, g3, g4, g5, g6, g7], tau)
}

fn fourth(al: &[f64; 5], psi: &PsiJet, x: C64, tau: f64) -> C64 {
    let i = C64::i();
    let (a1, a2, a3, a4) = (al[1], al[2], al[3], al[4]);
    let (p1, p2, p3, p4) = (psi[1], psi[2], psi[3], psi[4]);
    let q = x * (i + x);
    let s = i + 2.0 * x;
    let a11 = a1 * a1;
    let a22 = a2 * a2;
    let g3 = -0.5 * a4 * q * p4;
    let g4 = q / 6.0
        * (2.0 * p2 * (a22 + 3.0 * a1 * a3 - 3.0 * a4 * p2)
            + 2.0 * ((a22 + 2.0 * a1 * a3) * s - 4.0 * a4 * p1) * p3
            + (a22 + 2.0 * a1 * a3) * q * p4);
    let g5 = -q / 24.0
        * (a11 * a2 * (-7.0 + 44.0 * q) * p2 - (7.0 * a22 + 15.0 * a1 * a3) * q * p2 * p2
            - 2.0 * p1 * p1 * (2.0 * a22 + 9.0 * a1 * a3 - 18.0 * a4 * p2)
            + p1 * (s * (8.0 * a11 * a2 - (14.0 * a22 + 33.0 * a1 * a3) * p2)
                - (10.0 * a22 + 21.0 * a1 * a3) * q * p3)
            + 3.0 * a11 * a2 * q * (4.0 * s * p3 + q * p4));
    let g6 = q / 120.0
        * (2.0 * (8.0 * a22 + 21.0 * a1 * a3) * s * p1.powi(3) - 24.0 * a4 * p1.powi(4)
            + 2.0 * p1 * p1 * (a11 * a2 * (11.0 - 70.0 * q) + (26.0 * a22 + 57.0 * a1 * a3) * q * p2)
            + a11 * p1 * (s * (a11 * (-1.0 + 12.0 * q) - 112.0 * a2 * q * p2) - 38.0 * a2 * q * q * p3)
            + a11 * q
                * (a11 * (-7.0 + 36.0 * q) * p2 - 26.0 * a2 * q * p2 * p2
                    + a11 * q * (6.0 * s * p3 + q * p4)));
    let g7 = q * q / 144.0
        * (-32.0 * a11 * a2 * s * p1.powi(3) + 2.0 * (4.0 * a22 + 9.0 * a1 * a3) * p1.powi(4)
            + 2.0 * a11 * a11 * q * q * p2 * p2
            + a11 * p1 * p1 * (a11 * (-5.0 + 26.0 * q) - 47.0 * a2 * q * p2)
            + a11 * a11 * q * p1 * (13.0 * s * p2 + 3.0 * q * p3));
    let g8 = a11 * q.powi(3) / 48.0 * p1 * p1 * (a11 * s * p1 - 2.0 * a2 * p1 * p1 + a11 * q * p2);
    let g9 = a11 * a11 * q.powi(4) * p1.powi(4) / 384.0;
    let z = C64::new(0.0, 0.0);
    horner(&[z, z, g3, g4, g5, g6, g7, g8, g9], tau)
}

/// Single expansion term G^k at xi.
pub fn g_hat(model: &LocalLevyModel, k: usize, pt: &ExpansionPoint, xi: C64) -> Result<C64> {
    let f = factors(model, k, pt, xi)?;
    Ok(f.g0 * f.p[k])
}

/// All terms G^0..G^n at xi.
pub fn expansion_terms(
    model: &LocalLevyModel,
    n: usize,
    pt: &ExpansionPoint,
    xi: C64,
) -> Result<CharFunExpansion> {
    let f = factors(model, n, pt, xi)?;
    Ok(CharFunExpansion { xi, terms: (0..=n).map(|k| f.g0 * f.p[k]).collect() })
}

/// n-th order approximation of the characteristic function of X(T) given X(t)=x.
pub fn charfun_approx(model: &LocalLevyModel, n: usize, pt: &ExpansionPoint, xi: C64) -> Result<C64> {
    let f = factors(model, n, pt, xi)?;
    Ok(f.g0 * f.p[..=n].iter().sum::<C64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::model::{Jumps, LocalVol};

    #[test]
    fn order_zero_at_origin_is_one() {
        let m = LocalLevyModel::reference_merton();
        let pt = ExpansionPoint::new(0.0, 0.2, 1.0);
        let g = g_hat(&m, 0, &pt, C64::new(0.0, 0.0)).unwrap();
        assert!((g - 1.0).norm() < 1e-15);
        for n in 0..=4 {
            let v = charfun_approx(&m, n, &pt, C64::new(0.0, 0.0)).unwrap();
            assert!((v - 1.0).norm() < 1e-14);
        }
    }

    #[test]
    fn flat_vol_has_no_corrections() {
        let m = LocalLevyModel::cev(0.3, 1.0, Jumps::Merton { lambda: 0.3, m: -0.1, delta: 0.4 }, 0.05)
            .unwrap();
        let pt = ExpansionPoint::new(0.0, 0.1, 0.5);
        for k in 1..=4 {
            let g = g_hat(&m, k, &pt, C64::new(1.3, -0.4)).unwrap();
            assert_eq!(g.norm(), 0.0);
        }
    }

    #[test]
    fn hermitian_symmetry() {
        let m = LocalLevyModel::reference_vg();
        let pt = ExpansionPoint::new(0.0, 0.0, 1.0);
        for n in 0..=4 {
            for xi in [0.3, 1.0, 4.0] {
                let a = charfun_approx(&m, n, &pt, C64::new(xi, 0.0)).unwrap();
                let b = charfun_approx(&m, n, &pt, C64::new(-xi, 0.0)).unwrap();
                assert!((a - b.conj()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn high_orders_need_spot_basepoint() {
        let m = LocalLevyModel::reference_merton();
        let pt = ExpansionPoint::new(0.0, 0.0, 1.0).with_basepoint(0.1);
        assert!(g_hat(&m, 2, &pt, C64::new(1.0, 0.0)).is_ok());
        assert!(matches!(
            g_hat(&m, 3, &pt, C64::new(1.0, 0.0)),
            Err(Error::OrderUnavailable { .. })
        ));
        assert!(g_hat(&m, 5, &ExpansionPoint::new(0.0, 0.0, 1.0), C64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn basepoint_shift_is_second_order_small() {
        // the order-2 charfun moves little when the basepoint moves a little
        let lv = LocalVol::Cev { sigma0: 0.2, beta: 0.5 };
        let m = LocalLevyModel::new(lv, Jumps::None, 0.0).unwrap();
        let pt = ExpansionPoint::new(0.0, 0.0, 0.25);
        let xi = C64::new(1.0, 0.0);
        let a = charfun_approx(&m, 2, &pt, xi).unwrap();
        let b = charfun_approx(&m, 2, &pt.with_basepoint(0.01), xi).unwrap();
        assert!((a - b).norm() < 1e-4);
    }
}
