//! Independent oracle for the characteristic-function corrections: solve
//!   d/dtau G^k = psi G^k - sum_h alpha_h q(xi) (-i d/dxi - xbar)^h G^(k-h),  G^k(0) = 0,
//! by nested Gauss-Legendre quadrature of the Duhamel integral, carrying
//! every G^k as a truncated Taylor series in xi so the xi-derivatives are exact.

#![allow(dead_code)]

use num_complex::Complex64 as C64;
use pathlab::quad::Rule;

pub const DEG: usize = 4;

/// Truncated Taylor series sum c_j eps^j around a fixed xi.
#[derive(Clone, Copy, Debug)]
pub struct Jet(pub [C64; DEG + 1]);

impl Jet {
    pub fn zero() -> Jet {
        Jet([C64::new(0.0, 0.0); DEG + 1])
    }

    pub fn constant(c: C64) -> Jet {
        let mut j = Jet::zero();
        j.0[0] = c;
        j
    }

    /// The variable xi itself around xi0.
    pub fn var(xi0: C64) -> Jet {
        let mut j = Jet::constant(xi0);
        j.0[1] = C64::new(1.0, 0.0);
        j
    }

    pub fn add(&self, o: &Jet) -> Jet {
        let mut r = *self;
        for k in 0..=DEG {
            r.0[k] += o.0[k];
        }
        r
    }

    pub fn scale(&self, s: C64) -> Jet {
        let mut r = *self;
        r.0.iter_mut().for_each(|c| *c *= s);
        r
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let mut r = Jet::zero();
        for a in 0..=DEG {
            for b in 0..=DEG - a {
                r.0[a + b] += self.0[a] * o.0[b];
            }
        }
        r
    }

    pub fn exp(&self) -> Jet {
        let mut r = Jet::zero();
        r.0[0] = self.0[0].exp();
        for n in 1..=DEG {
            let mut s = C64::new(0.0, 0.0);
            for k in 1..=n {
                s += self.0[k] * r.0[n - k] * k as f64;
            }
            r.0[n] = s / n as f64;
        }
        r
    }

    pub fn ln(&self) -> Jet {
        let mut r = Jet::zero();
        r.0[0] = self.0[0].ln();
        for n in 1..=DEG {
            let mut s = self.0[n] * n as f64;
            for k in 1..n {
                s -= r.0[k] * self.0[n - k] * k as f64;
            }
            r.0[n] = s / (self.0[0] * n as f64);
        }
        r
    }

    /// (-i d/dxi - xbar) applied to the series (top coefficient is lost).
    pub fn position(&self, xbar: f64) -> Jet {
        let mut r = Jet::zero();
        for k in 0..DEG {
            r.0[k] = C64::new(0.0, -1.0) * self.0[k + 1] * (k + 1) as f64 - self.0[k] * xbar;
        }
        r
    }
}

#[derive(Clone, Copy, Debug)]
pub enum OracleJumps {
    None,
    Merton { lambda: f64, m: f64, delta: f64 },
    VarianceGamma { kappa: f64, theta: f64, rho: f64 },
}

/// Model description kept separate from the library types on purpose.
#[derive(Clone, Debug)]
pub struct OracleModel {
    /// alpha_0..alpha_4 about the basepoint
    pub alphas: [f64; 5],
    pub rate: f64,
    pub jumps: OracleJumps,
}

impl OracleModel {
    /// CEV local variance sigma0^2 exp(2 (beta - 1) x) expanded about xbar.
    pub fn cev(sigma0: f64, beta: f64, xbar: f64, rate: f64, jumps: OracleJumps) -> Self {
        let c = 2.0 * (beta - 1.0);
        let a = sigma0 * sigma0 * (c * xbar).exp();
        let mut alphas = [a; 5];
        let mut fact = 1.0;
        for (h, al) in alphas.iter_mut().enumerate().skip(1) {
            fact *= h as f64;
            *al = a * c.powi(h as i32) / (2.0 * fact);
        }
        OracleModel { alphas, rate, jumps }
    }

    fn r0(&self) -> f64 {
        match self.jumps {
            OracleJumps::None => self.rate,
            OracleJumps::Merton { lambda, m, delta } => self.rate - lambda * ((m + 0.5 * delta * delta).exp() - 1.0),
            OracleJumps::VarianceGamma { kappa, theta, rho } => {
                self.rate + (1.0 - kappa * (theta + 0.5 * rho * rho)).ln() / kappa
            }
        }
    }

    /// psi around xi0, from the closed form.
    pub fn psi(&self, xi0: C64) -> Jet {
        let i = C64::i();
        let x = Jet::var(xi0);
        let q = x.mul(&x).add(&x.scale(i));
        let mut out = q.scale(C64::new(-0.5 * self.alphas[0], 0.0)).add(&x.scale(i * self.r0()));
        match self.jumps {
            OracleJumps::None => {}
            OracleJumps::Merton { lambda, m, delta } => {
                let e = x.scale(i * m).add(&x.mul(&x).scale(C64::new(-0.5 * delta * delta, 0.0))).exp();
                out = out.add(&e.add(&Jet::constant(C64::new(-1.0, 0.0))).scale(C64::new(lambda, 0.0)));
            }
            OracleJumps::VarianceGamma { kappa, theta, rho } => {
                let inner = Jet::constant(C64::new(1.0, 0.0))
                    .add(&x.scale(-i * theta * kappa))
                    .add(&x.mul(&x).scale(C64::new(0.5 * rho * rho * kappa, 0.0)));
                out = out.add(&inner.ln().scale(C64::new(-1.0 / kappa, 0.0)));
            }
        }
        out
    }
}

pub struct Duhamel {
    pub model: OracleModel,
    pub x: f64,
    pub xbar: f64,
    pub xi0: C64,
    psi: Jet,
    q: Jet,
    rule: Rule,
}

impl Duhamel {
    pub fn new(model: OracleModel, x: f64, xbar: f64, xi0: C64, nodes: usize) -> Self {
        let psi = model.psi(xi0);
        let v = Jet::var(xi0);
        let q = v.mul(&v).add(&v.scale(C64::i()));
        Duhamel { model, x, xbar, xi0, psi, q, rule: Rule::gauss_legendre(nodes) }
    }

    fn g0(&self, u: f64) -> Jet {
        Jet::var(self.xi0).scale(C64::i() * self.x).add(&self.psi.scale(C64::new(u, 0.0))).exp()
    }

    /// G^k(tau) as a jet; only the first DEG - k + 1 coefficients are meaningful.
    pub fn g(&self, k: usize, tau: f64) -> Jet {
        if k == 0 {
            return self.g0(tau);
        }
        let mut acc = Jet::zero();
        for (node, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let u = 0.5 * tau * (node + 1.0);
            let mut src = Jet::zero();
            for h in 1..=k {
                let mut d = self.g(k - h, u);
                for _ in 0..h {
                    d = d.position(self.xbar);
                }
                src = src.add(&d.scale(C64::new(self.model.alphas[h], 0.0)));
            }
            let prop = self.psi.scale(C64::new(tau - u, 0.0)).exp();
            acc = acc.add(&prop.mul(&self.q).mul(&src).scale(C64::new(0.5 * tau * w, 0.0)));
        }
        acc.scale(C64::new(-1.0, 0.0))
    }
}
