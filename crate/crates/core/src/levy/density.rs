//! Second-order expansion of the transition density for a local volatility
//! model with Gaussian (Merton) jumps, as a Poisson mixture of Gaussians and
//! their x-derivatives.

use super::model::{Jumps, LocalLevyModel};
use crate::error::{Error, Result};
use crate::quad::Rule;
use std::f64::consts::PI;

pub const DEFAULT_TRUNCATION: usize = 8;

const NJ: usize = 4; // powers of (x - xbar)
const NI: usize = 10; // powers of d/dx

/// Differential operator sum c[j][i] (x - xbar)^j d^i/dx^i, normal ordered.
#[derive(Clone, Copy, Debug)]
struct Op {
    c: [[f64; NI]; NJ],
}

impl Op {
    fn zero() -> Op {
        Op { c: [[0.0; NI]; NJ] }
    }

    fn term(j: usize, i: usize, v: f64) -> Op {
        let mut o = Op::zero();
        o.c[j][i] = v;
        o
    }

    /// self o other, using d^b X^c = sum_l C(b,l) c!/(c-l)! X^(c-l) d^(b-l)
    fn compose(&self, other: &Op) -> Op {
        let mut out = Op::zero();
        for a in 0..NJ {
            for b in 0..NI {
                let x = self.c[a][b];
                if x == 0.0 {
                    continue;
                }
                for c in 0..NJ {
                    for d in 0..NI {
                        let y = other.c[c][d];
                        if y == 0.0 {
                            continue;
                        }
                        for l in 0..=b.min(c) {
                            let coef = binom(b, l) * falling(c, l);
                            let (jj, ii) = (a + c - l, b - l + d);
                            assert!(jj < NJ && ii < NI, "operator degree overflow");
                            out.c[jj][ii] += x * y * coef;
                        }
                    }
                }
            }
        }
        out
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn falling(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, j| acc * j as f64)
}

/// Probabilists' Hermite polynomial He_n(z).
fn hermite(n: usize, z: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, z);
    if n == 0 {
        return 1.0;
    }
    for k in 1..n {
        let h2 = z * h1 - k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

struct Params {
    alpha: [f64; 5],
    lambda: f64,
    m: f64,
    delta2: f64,
    r0: f64,
}

impl Params {
    /// Multiplication operator (x - xbar) expressed on Gamma_n over an elapsed time w.
    fn v_op(&self, n: usize, w: f64) -> Op {
        let a = self.alpha[0] * w;
        let mut o = Op::term(1, 0, 1.0);
        o.c[0][0] = w * self.r0 - 0.5 * a + n as f64 * self.m;
        o.c[0][1] = a + n as f64 * self.delta2;
        o
    }

    /// First-order operator coefficients over a remaining time sigma, without
    /// the exp(-lambda sigma) factor: (j, i, value) for X^j d^i.
    fn first_order(&self, n: usize, k: usize, sigma: f64) -> [(usize, usize, f64); 5] {
        let pref = self.lambda.powi((n + k) as i32) / (factorial(n) * factorial(k)) * self.alpha[1];
        let i0 = sigma.powi((n + k + 1) as i32) * factorial(n) * factorial(k) / factorial(n + k + 1);
        let i1 = sigma.powi((n + k + 2) as i32) * factorial(n + 1) * factorial(k) / factorial(n + k + 2);
        let ic = (self.r0 - 0.5 * self.alpha[0]) * i1 + n as f64 * self.m * i0;
        let ib = self.alpha[0] * i1 + n as f64 * self.delta2 * i0;
        [
            (1, 2, pref * i0),
            (1, 1, -pref * i0),
            (0, 1, -pref * ic),
            (0, 2, pref * (ic - ib)),
            (0, 3, pref * ib),
        ]
    }
}

/// Truncated density expansion G^0_M + G^1_M + G^2_M at fixed (t, x, T) with
/// basepoint x.
#[derive(Debug, Clone)]
pub struct MertonDensityExpansion {
    pub order: usize,
    pub truncation: usize,
    x: f64,
    tau: f64,
    lambda: f64,
    m: f64,
    delta2: f64,
    alpha0: f64,
    r0: f64,
    /// coefficient of d^i Gamma_N / dx^i, per order and per N
    coef: [Vec<[f64; NI]>; 3],
}

impl MertonDensityExpansion {
    pub fn new(
        model: &LocalLevyModel,
        order: usize,
        truncation: usize,
        t: f64,
        x: f64,
        maturity: f64,
    ) -> Result<Self> {
        let (lambda, m, delta) = match model.jumps {
            Jumps::Merton { lambda, m, delta } => (lambda, m, delta),
            Jumps::None => (0.0, 0.0, 0.0),
            Jumps::VarianceGamma { .. } => {
                return Err(Error::ModelMismatch(
                    "density expansion requires Gaussian jumps".into(),
                ))
            }
        };
        if order > 2 {
            return Err(Error::OrderUnavailable { order, reason: "density expansion stops at order 2".into() });
        }
        let tau = maturity - t;
        if !(tau > 0.0) {
            return Err(Error::Domain("need t < T".into()));
        }
        let p = Params { alpha: model.alphas(x), lambda, m, delta2: delta * delta, r0: model.r0() };
        let mm = truncation;
        let mut coef = [vec![[0.0; NI]; mm + 1], vec![[0.0; NI]; 2 * mm + 1], vec![[0.0; NI]; 3 * mm + 1]];
        let decay = (-lambda * tau).exp();
        coef[0].iter_mut().enumerate().for_each(|(n, c)| {
            c[0] = decay * (lambda * tau).powi(n as i32) / factorial(n);
        });
        if order >= 1 {
            for n in 0..=mm {
                for k in 0..=mm {
                    for (j, i, val) in p.first_order(n, k, tau) {
                        // at the basepoint only the X^0 part survives
                        if j == 0 {
                            coef[1][n + k][i] += decay * val;
                        }
                    }
                }
            }
        }
        if order >= 2 {
            let d2 = {
                let mut o = Op::term(0, 2, 1.0);
                o.c[0][1] = -1.0;
                o
            };
            let rule = Rule::gauss_legendre((3 * mm + 6) / 2 + 2);
            for n in 0..=mm {
                let wn = p.lambda.powi(n as i32) / factorial(n);
                for (node, wt) in rule.nodes.iter().zip(&rule.weights) {
                    let w = 0.5 * tau * (node + 1.0);
                    let gw = 0.5 * tau * wt;
                    let v = p.v_op(n, w);
                    let vd2 = v.compose(&d2);
                    // V D2 V^j d^i for the first-order terms
                    let mut pre_ops = [[Op::zero(); 4]; 2];
                    for (j, row) in pre_ops.iter_mut().enumerate() {
                        for (i, slot) in row.iter_mut().enumerate().skip(1) {
                            let inner = if j == 0 { Op::term(0, i, 1.0) } else { v.compose(&Op::term(0, i, 1.0)) };
                            *slot = vd2.compose(&inner);
                        }
                    }
                    let outer = wn * p.alpha[1] * w.powi(n as i32) * gw;
                    for h in 0..=mm {
                        for k in 0..=mm {
                            let slot = &mut coef[2][n + h + k];
                            for (j, i, val) in p.first_order(h, k, tau - w) {
                                let op = &pre_ops[j][i];
                                for (ii, c) in op.c[0].iter().enumerate() {
                                    slot[ii] += decay * outer * val * c;
                                }
                            }
                        }
                    }
                    // second-order Taylor term
                    let v2d2 = v.compose(&vd2);
                    for k in 0..=mm {
                        let wk = decay * wn * p.lambda.powi(k as i32) / factorial(k)
                            * p.alpha[2]
                            * w.powi(n as i32)
                            * (tau - w).powi(k as i32)
                            * gw;
                        for (ii, c) in v2d2.c[0].iter().enumerate() {
                            coef[2][n + k][ii] += wk * c;
                        }
                    }
                }
            }
        }
        Ok(MertonDensityExpansion {
            order,
            truncation,
            x,
            tau,
            lambda,
            m,
            delta2: delta * delta,
            alpha0: p.alpha[0],
            r0: p.r0,
            coef,
        })
    }

    /// Per-order contributions (G^0_M, G^1_M, G^2_M) at log-price y.
    pub fn terms(&self, y: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        let a = self.alpha0 * self.tau;
        for (k, table) in self.coef.iter().enumerate().take(self.order + 1) {
            for (n, row) in table.iter().enumerate() {
                if row.iter().all(|c| *c == 0.0) {
                    continue;
                }
                let var = a + n as f64 * self.delta2;
                let sd = var.sqrt();
                let w = self.x - y + self.tau * self.r0 - 0.5 * a + n as f64 * self.m;
                let z = w / sd;
                let g = (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt());
                let mut s = 0.0;
                let mut scale = 1.0;
                for (i, c) in row.iter().enumerate() {
                    if *c != 0.0 {
                        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                        s += c * sign * hermite(i, z) * scale;
                    }
                    scale /= sd;
                }
                out[k] += s * g;
            }
        }
        out
    }

    pub fn density(&self, y: f64) -> f64 {
        self.terms(y).iter().sum()
    }

    /// Jump intensity the expansion was built with.
    pub fn intensity(&self) -> f64 {
        self.lambda
    }
}

/// Density of X(T) at y given X(t) = x, to the requested order.
#[allow(clippy::too_many_arguments)]
pub fn merton_density(
    model: &LocalLevyModel,
    order: usize,
    truncation: usize,
    t: f64,
    x: f64,
    maturity: f64,
    y: f64,
) -> Result<f64> {
    Ok(MertonDensityExpansion::new(model, order, truncation, t, x, maturity)?.density(y))
}
