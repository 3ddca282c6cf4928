use proptest::prelude::*;

use semimart_core::criteria::{fractional_constant, fractional_time_integral, verdict, CriteriaConfig};
use semimart_core::kernels::KernelSpec;
use semimart_core::levy::{k_jump_quadrature, k_kernel, LevyMeasure1D, ModelSpec};
use semimart_core::quadrature::{integrate, Interval, QuadratureConfig};
use semimart_core::simulation::*;

fn small() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(small())]

    #[test]
    fn series_invariants_and_decomposition(seed in any::<u64>(), alpha in 1.05f64..1.9, cap in 5.0f64..300.0) {
        let m = ModelSpec::single(0.0, 0.0, LevyMeasure1D::tempered_stable(alpha, 1.0, 1.0).unwrap()).unwrap();
        let mut c = SeriesConfig::new(m, KernelSpec::exp_ma(1.0).unwrap());
        c.gamma_cap = cap;
        c.grid_points = 129;
        let st = sample_series(&c, &mut rng_from_seed(seed)).unwrap();
        prop_assert!(st.check_invariants());
        let b = build_paths(&st, &c).unwrap();
        let d = b.decomposition_check();
        prop_assert!(d.max_decomposition_residual <= 1e-10 * d.path_scale.max(f64::MIN_POSITIVE));
        prop_assert!(d.a_route_disagreement <= 1e-10 * d.path_scale.max(1.0));
        let again = sample_series(&c, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(&st, &again);
        prop_assert_eq!(b, build_paths(&again, &c).unwrap());
    }

    #[test]
    fn tempered_quantile_inverts_tail(alpha in 0.2f64..1.95, c in 0.1f64..5.0, lambda in 0.1f64..5.0, x in 1e-4f64..20.0) {
        let rho = LevyMeasure1D::tempered_stable(alpha, c, lambda).unwrap();
        let q = QuadratureConfig::default();
        let s = rho.tail_plus(x, &q).unwrap();
        prop_assume!(s > 1e-250);
        let back = rho.tail_quantile(s, &q).unwrap();
        prop_assert!((back - x).abs() <= 1e-8 * x);
    }

    #[test]
    fn k_closed_form_matches_quadrature(alpha in 0.1f64..1.95, lambda in 0.2f64..4.0, x in 1e-3f64..1e3) {
        let rho = LevyMeasure1D::tempered_stable(alpha, 1.0, lambda).unwrap();
        let m = ModelSpec::single(0.0, 0.0, rho.clone()).unwrap();
        let q = QuadratureConfig { abs_tol: 1e-300, ..QuadratureConfig::default() };
        let exact = k_kernel(x, 0, &m, &q).unwrap();
        let num = k_jump_quadrature(x, &rho, &q).unwrap();
        prop_assert!((exact - num).abs() <= 1e-7 * exact);
    }

    #[test]
    fn fractional_scaling(gamma in 0.05f64..0.48, x in 0.01f64..100.0) {
        let v = fractional_time_integral(gamma, x, &QuadratureConfig::default()).unwrap();
        let exact = fractional_constant(gamma) * x.powf(1.0 / (1.0 - gamma));
        prop_assert!((v.value - exact).abs() <= 1e-6 * exact);
    }

    #[test]
    fn quadrature_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, p in 1.2f64..4.0) {
        let q = QuadratureConfig::default();
        let f = |t: f64| (1.0 + t).powf(-p);
        let g = |t: f64| (-t).exp();
        let whole = integrate(|t| a * f(t) + b * g(t), Interval::positive_half_line(), &q).unwrap().value;
        let exact = a / (p - 1.0) + b;
        prop_assert!((whole - exact).abs() <= 1e-8 * (a.abs() / (p - 1.0) + b.abs()) + 1e-12);
    }

    #[test]
    fn verdict_is_deterministic_and_consistent(gamma in 0.05f64..0.49, alpha in 1.05f64..1.95) {
        let cfg = CriteriaConfig::default();
        let m = ModelSpec::single(0.0, 0.0, LevyMeasure1D::tempered_stable(alpha, 1.0, 1.0).unwrap()).unwrap();
        let k = KernelSpec::fractional(vec![gamma]).unwrap();
        let r1 = verdict(&m, &k, &cfg).unwrap();
        let r2 = verdict(&m, &k, &cfg).unwrap();
        prop_assert!(r1.is_consistent());
        prop_assert_eq!(r1, r2);
    }
}
