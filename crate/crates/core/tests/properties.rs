use num_complex::Complex64 as C64;
use pathlab::functional::{finite_difference_bundle, foellmer_integral, FnFunctional, StoppedPath};
use pathlab::hedging::simulate_delta_hedge;
use pathlab::levy::{charfun_approx, ExpansionPoint, LocalLevyModel};
use pathlab::path::{local_realized_vol, qv_approx, qv_gain_identity, qv_limit, DyadicPartitionSequence, SampledPath};
use pathlab::pricing::{BSModelSpec, MonitorFunction, PayoffSpec};
use proptest::prelude::*;

const LEVEL: u32 = 8;

/// Positive path on 2^LEVEL cells from bounded log-increments.
fn price_path() -> impl Strategy<Value = SampledPath> {
    prop::collection::vec(-0.05f64..0.05, 1usize << LEVEL).prop_map(|steps| {
        let mut x = 0.0;
        let mut values = vec![1.0];
        for s in steps {
            x += s;
            values.push(x.exp());
        }
        SampledPath::uniform(1.0, values, true).unwrap()
    })
}

fn payoffs() -> Vec<PayoffSpec> {
    vec![
        PayoffSpec::EuropeanCall { strike: 1.0 },
        PayoffSpec::EuropeanPut { strike: 0.9 },
        PayoffSpec::GeometricAsianCall { strike: 1.0 },
        PayoffSpec::DiscreteMonitor { dates: vec![0.5, 1.0], function: MonitorFunction::Product },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qv_is_nonnegative_and_nondecreasing_on_its_partition(path in price_path(), level in 1u32..=LEVEL) {
        // between breakpoints the stopped last increment can shrink
        let mut prev = 0.0;
        for t in DyadicPartitionSequence::new(1.0, level).unwrap().breakpoints(level) {
            let a = qv_approx(&path, level, t).unwrap();
            prop_assert!(a >= prev - 1e-15, "A dropped from {prev} to {a}");
            prev = a;
        }
    }

    #[test]
    fn qv_equals_squared_value_minus_gain(path in price_path(), level in 1u32..=LEVEL, t in 0.0f64..=1.0) {
        let (a, rhs) = qv_gain_identity(&path, level, t).unwrap();
        prop_assert!((a - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()), "{a} vs {rhs}");
    }

    #[test]
    fn realized_vol_ignores_price_scale(path in price_path(), c in 0.1f64..10.0, t in 0.0f64..0.9) {
        let parts = DyadicPartitionSequence::new(1.0, LEVEL).unwrap();
        let scaled = path.scaled(c).unwrap();
        let q1 = qv_limit(&path, &parts, 0.05).unwrap();
        let q2 = qv_limit(&scaled, &parts, 0.05).unwrap();
        let s1 = local_realized_vol(&q1, &path, t, 0.1).unwrap();
        let s2 = local_realized_vol(&q2, &scaled, t, 0.1).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-9 * s1.max(1e-12), "{s1} vs {s2}");
    }

    #[test]
    fn functionals_do_not_look_ahead(path in price_path(), k in 1usize..250, shock in -0.3f64..0.3) {
        let model = BSModelSpec::constant(0.2, 1.0).unwrap();
        let future = path.with_values_after(k, |_, v| v * (1.0 + shock)).unwrap();
        for spec in payoffs() {
            let f = spec.build(&model, 1.0).unwrap();
            let a = f.value(&StoppedPath::at_index(&path, k)).unwrap();
            let b = f.value(&StoppedPath::at_index(&future, k)).unwrap();
            prop_assert_eq!(a, b, "{:?}", spec);
        }
    }

    #[test]
    fn constant_integrand_telescopes(path in price_path(), c in -3.0f64..3.0) {
        let parts = DyadicPartitionSequence::new(1.0, LEVEL).unwrap();
        let phi = FnFunctional(move |_: &StoppedPath| c);
        let r = foellmer_integral(&phi, &path, &parts, 1e-3).unwrap();
        let v = path.values();
        let want = c * (v[v.len() - 1] - v[0]);
        for s in &r.per_level {
            prop_assert!((s - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn portfolio_is_premium_plus_gains(path in price_path(), level in 1u32..=LEVEL) {
        let parts = DyadicPartitionSequence::new(1.0, LEVEL).unwrap();
        let f = PayoffSpec::EuropeanCall { strike: 1.0 }.build(&BSModelSpec::constant(0.2, 1.0).unwrap(), 1.0).unwrap();
        let rep = simulate_delta_hedge(f.as_ref(), &path, &parts, level).unwrap();
        for (v, g) in rep.portfolio.iter().zip(&rep.gains) {
            prop_assert!((v - rep.initial_value - g).abs() <= 1e-14);
        }
        prop_assert!((rep.direct_error - (rep.portfolio.last().unwrap() - rep.payoff)).abs() <= 1e-14);
    }

    #[test]
    fn closed_form_greeks_match_bumps(
        path in price_path(),
        k in 20usize..230,
        strike in 0.7f64..1.4,
        sigma in 0.1f64..0.5,
    ) {
        let model = BSModelSpec::constant(sigma, 1.0).unwrap();
        for spec in [PayoffSpec::EuropeanCall { strike }, PayoffSpec::GeometricAsianCall { strike }] {
            let f = spec.build(&model, 1.0).unwrap();
            let sp = StoppedPath::at_index(&path, k);
            let exact = f.sensitivities(&sp).unwrap().unwrap();
            let h = 1e-4 * sp.current();
            let fd = finite_difference_bundle(f.as_ref(), &sp, h, 1e-6).unwrap();
            let tol = |x: f64| 1e-4 * (1.0 + x.abs());
            prop_assert!((exact.grad_v - fd.grad_v).abs() <= tol(exact.grad_v), "{spec:?} delta {} vs {}", exact.grad_v, fd.grad_v);
            prop_assert!((exact.hess_v - fd.hess_v).abs() <= 1e-2 * (1.0 + exact.hess_v.abs()), "{spec:?} gamma {} vs {}", exact.hess_v, fd.hess_v);
            // the geometric Asian loads on S^((T-t)/T) and can lose convexity in the money
            if matches!(spec, PayoffSpec::EuropeanCall { .. }) {
                prop_assert!(exact.hess_v >= -1e-12, "gamma {} at t={} S={}", exact.hess_v, sp.time(), sp.current());
            }
        }
    }

    #[test]
    fn expansion_is_hermitian(xi in -20.0f64..20.0, order in 0usize..=4, tau in 0.05f64..2.0) {
        for model in [LocalLevyModel::reference_merton(), LocalLevyModel::reference_vg()] {
            let pt = ExpansionPoint::new(0.0, 0.0, tau);
            let a = charfun_approx(&model, order, &pt, C64::new(xi, 0.0)).unwrap();
            let b = charfun_approx(&model, order, &pt, C64::new(-xi, 0.0)).unwrap();
            prop_assert!((a - b.conj()).norm() <= 1e-12 * (1.0 + a.norm()), "{a} vs {b}");
        }
    }
}
