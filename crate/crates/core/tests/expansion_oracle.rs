mod support;

use num_complex::Complex64 as C64;
use pathlab::levy::{g_hat, ExpansionPoint, Jumps, LocalLevyModel};
use support::duhamel::{Duhamel, OracleJumps, OracleModel};

fn check(model: &LocalLevyModel, jumps: OracleJumps, sigma0: f64, beta: f64, x: f64, tau: f64, xis: &[C64]) -> f64 {
    let mut worst: f64 = 0.0;
    for &xi in xis {
        let om = OracleModel::cev(sigma0, beta, x, model.rate, jumps);
        let d = Duhamel::new(om, x, x, xi, 12);
        let pt = ExpansionPoint::new(0.0, x, tau);
        for k in 1..=4 {
            let want = d.g(k, tau).0[0];
            let got = g_hat(model, k, &pt, xi).unwrap();
            let rel = (got - want).norm() / want.norm().max(1e-300);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn merton_terms_match_duhamel_quadrature() {
    let m = LocalLevyModel::reference_merton();
    let j = OracleJumps::Merton { lambda: 0.3, m: -0.1, delta: 0.4 };
    let xis = [0.3, 1.0, 2.5, 5.0, 8.0].map(|r| C64::new(r, -1.5));
    for (x, tau) in [(0.0, 0.25), (0.0, 1.0), (-0.3, 10.0)] {
        let w = check(&m, j, 0.2, 0.5, x, tau, &xis);
        assert!(w < 1e-8, "x={x} tau={tau} worst rel {w:e}");
    }
}

#[test]
fn vg_terms_match_duhamel_quadrature() {
    let m = LocalLevyModel::reference_vg();
    let j = OracleJumps::VarianceGamma { kappa: 0.15, theta: -0.1, rho: 0.2 };
    let xis = [0.3, 1.0, 2.5].map(|r| C64::new(r, -1.5));
    let w = check(&m, j, 0.2, 0.5, 0.1, 1.0, &xis);
    assert!(w < 1e-8, "worst rel {w:e}");
}

#[test]
fn diffusion_terms_match_duhamel_quadrature() {
    let m = LocalLevyModel::cev(0.3, 0.3, Jumps::None, 0.02).unwrap();
    let xis = [0.5, 2.0].map(|r| C64::new(r, -1.2));
    let w = check(&m, OracleJumps::None, 0.3, 0.3, 0.2, 2.0, &xis);
    assert!(w < 1e-8, "worst rel {w:e}");
}
