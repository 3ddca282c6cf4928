use std::sync::Arc;

use semimart_core::criteria::*;
use semimart_core::kernels::KernelSpec;
use semimart_core::levy::{Component, LevyMeasure1D, ModelSpec, TailExponents};
use semimart_core::quadrature::QuadratureConfig;

fn single(levy: LevyMeasure1D) -> ModelSpec {
    ModelSpec::single(0.0, 0.0, levy).unwrap()
}

fn comp(label: &str, weight: f64, levy: LevyMeasure1D) -> Component {
    Component { label: label.into(), weight, drift: 0.0, gaussian_var: 0.0, levy }
}

/// `f(t) = t^g` on `t >= 0` written as a generic moving-average kernel.
fn power_kernel(g: f64) -> KernelSpec {
    let f = move |x: f64, _| if x > 0.0 { x.powf(g) } else { 0.0 };
    KernelSpec::simma(Arc::new(f), Arc::new(f), Some(Arc::new(move |x: f64, _| g * x.powf(g - 1.0))), vec![])
}

#[test]
fn fractional_grid_matches_exponent_analysis() {
    let cfg = CriteriaConfig::default();
    for i in 0..8 {
        let g = 0.1 + 0.05 * i as f64;
        let k = KernelSpec::fractional(vec![g]).unwrap();
        for a in [1.2, 1.8] {
            let r = verdict(&single(LevyMeasure1D::stable(a, 1.0).unwrap()), &k, &cfg).unwrap();
            assert_eq!(r.verdict, Verdict::NotSemimartingale, "stable {a} gamma {g}");
        }
        for a in [1.2, 1.5] {
            let r = verdict(&single(LevyMeasure1D::tempered_stable(a, 1.0, 1.0).unwrap()), &k, &cfg).unwrap();
            let expect = if g > 1.0 - 1.0 / a { Verdict::Semimartingale } else { Verdict::NotSemimartingale };
            assert_eq!(r.verdict, expect, "tempered {a} gamma {g}");
        }
    }
}

#[test]
fn tempered_rule_agrees_with_general_conditions() {
    let cfg = CriteriaConfig::default();
    let cases: Vec<(f64, KernelSpec)> = vec![
        (1.3, KernelSpec::exp_ma(0.7).unwrap()),
        (1.6, KernelSpec::exp_ma(2.5).unwrap()),
        (1.2, power_kernel(0.3)),
        (1.2, power_kernel(0.1)),
        (1.5, power_kernel(0.4)),
        (1.5, power_kernel(0.2)),
        (1.8, power_kernel(0.3)),
        (1.1, power_kernel(0.2)),
        (1.4, power_kernel(0.45)),
        (1.0, power_kernel(0.3)),
    ];
    for (a, k) in cases {
        let m = single(LevyMeasure1D::tempered_stable(a, 1.0, 1.0).unwrap());
        let rule = verdict(&m, &k, &cfg).unwrap();
        let general = verdict_general(&m, &k, &cfg).unwrap();
        assert_ne!(rule.verdict, Verdict::Inconclusive);
        assert_eq!(rule.verdict, general.verdict, "alpha {a}: {:?} vs {:?}", rule.reasons, general.reasons);
    }
}

#[test]
fn stable_rule_exp_ma_value() {
    // ∫_0^∞ e^{-1.5 t} dt = 2/3.
    let r = verdict(&single(LevyMeasure1D::stable(1.5, 1.0).unwrap()), &KernelSpec::exp_ma(1.0).unwrap(), &CriteriaConfig::default()).unwrap();
    let cf = r.condition(ConditionId::Cf).unwrap();
    assert!((cf.value.unwrap() - 2.0 / 3.0).abs() < 1e-9);
}

#[test]
fn multi_stable_weighted_rule() {
    let cfg = CriteriaConfig::default();
    let m = ModelSpec::new(vec![
        comp("a", 0.5, LevyMeasure1D::stable(1.3, 1.0).unwrap()),
        comp("b", 0.5, LevyMeasure1D::stable(1.7, 2.0).unwrap()),
    ])
    .unwrap();
    let r = verdict(&m, &KernelSpec::exp_ma(1.0).unwrap(), &cfg).unwrap();
    assert_eq!(r.verdict, Verdict::Semimartingale);
    // Σ m c/(2-α) ∫ e^{-α t} dt.
    let expect = 0.5 * 1.0 / 0.7 / 1.3 + 0.5 * 2.0 / 0.3 / 1.7;
    assert!((r.condition(ConditionId::Cf).unwrap().value.unwrap() - expect).abs() < 1e-9 * expect);
}

#[test]
fn superposed_fractional_sufficient_condition() {
    let cfg = CriteriaConfig::default();
    let m = ModelSpec::new(vec![
        comp("a", 1.0, LevyMeasure1D::tempered_stable(1.2, 1.0, 1.0).unwrap()),
        comp("b", 2.0, LevyMeasure1D::tempered_stable(1.1, 1.0, 2.0).unwrap()),
    ])
    .unwrap();
    let k = KernelSpec::fractional(vec![0.3, 0.4]).unwrap();
    assert_eq!(verdict(&m, &k, &cfg).unwrap().verdict, Verdict::Semimartingale);
    let k = KernelSpec::fractional(vec![0.3, 0.55]).unwrap();
    assert_eq!(verdict(&m, &k, &cfg).unwrap().verdict, Verdict::NotSemimartingale);
}

#[test]
fn small_index_stable_goes_to_general_path() {
    let cfg = CriteriaConfig::default();
    let r = verdict(&single(LevyMeasure1D::stable(0.7, 1.0).unwrap()), &KernelSpec::exp_ma(1.0).unwrap(), &cfg).unwrap();
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert!(r.reasons.iter().any(|s| s.contains("finite variation")));
    assert_eq!(r.condition(ConditionId::InvarCon).unwrap().finite, Some(false));
}

#[test]
fn custom_without_exponent_gives_unknown_gate() {
    let cfg = CriteriaConfig::default();
    let d = LevyMeasure1D::custom(Arc::new(|x: f64| (-x.abs()).exp() / x.abs().powf(1.5)), true, TailExponents::default());
    assert_eq!(check_necessity_gate(&single(d.clone())), GateAnswer::Unknown);
    let r = verdict(&single(d), &power_kernel(0.6), &cfg).unwrap();
    assert_eq!(r.verdict, Verdict::Inconclusive);
}

#[test]
fn general_phi_is_inconclusive() {
    let k = KernelSpec::general_phi(Arc::new(|t: f64, s: f64, _| (-(t - s)).exp()), Arc::new(|_, _| 1.0));
    let r = verdict(&single(LevyMeasure1D::stable(1.5, 1.0).unwrap()), &k, &CriteriaConfig::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Inconclusive);
}

#[test]
fn cf_inner_closed_form_grid() {
    let q = QuadratureConfig::default();
    for a in [1.1, 1.5, 1.9] {
        for c in [0.5, 2.0] {
            let rho = LevyMeasure1D::stable(a, c).unwrap();
            for y in [0.01, 1.0, 100.0] {
                let exact = stable_cf_constant(a, c) * f64::powf(y, a);
                let num = cf_inner_quadrature(&rho, y, &q).unwrap().value();
                assert!((num - exact).abs() <= 1e-6 * exact, "a={a} c={c} y={y}");
            }
        }
    }
}

#[test]
fn report_is_consistent_across_examples() {
    let cfg = CriteriaConfig::default();
    let kernels = [KernelSpec::exp_ma(1.0).unwrap(), KernelSpec::fractional(vec![0.3]).unwrap(), KernelSpec::indicator(1.0).unwrap()];
    let measures = [
        LevyMeasure1D::stable(1.5, 1.0).unwrap(),
        LevyMeasure1D::tempered_stable(1.3, 1.0, 1.0).unwrap(),
        LevyMeasure1D::symmetric_point_mass(1.0, 2.0).unwrap(),
    ];
    for k in &kernels {
        for rho in &measures {
            let r = verdict(&single(rho.clone()), k, &cfg).unwrap();
            assert!(r.is_consistent());
            assert!(!r.reasons.is_empty());
        }
    }
}
