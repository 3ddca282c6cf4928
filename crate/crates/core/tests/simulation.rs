use semimart_core::kernels::KernelSpec;
use semimart_core::levy::{LevyMeasure1D, ModelSpec};
use semimart_core::simulation::*;

fn config(levy: LevyMeasure1D, kernel: KernelSpec, cap: f64) -> SeriesConfig {
    let mut c = SeriesConfig::new(ModelSpec::single(0.0, 0.0, levy).unwrap(), kernel);
    c.window_past = 8.0;
    c.gamma_cap = cap;
    c.grid_points = 1025;
    c
}

#[test]
fn fractional_kernel_has_no_jumps() {
    let c = config(LevyMeasure1D::stable(1.5, 1.0).unwrap(), KernelSpec::fractional(vec![0.3]).unwrap(), 200.0);
    let st = sample_series(&c, &mut rng_from_seed(5)).unwrap();
    assert!(!st.is_empty());
    assert!(extract_jumps(&st, &c).is_empty());
    let b = build_paths(&st, &c).unwrap();
    assert!(b.m.iter().all(|v| *v == 0.0));
    let x0 = b.x[0];
    assert!(b.x.iter().zip(&b.a).all(|(x, a)| (x - x0 - a).abs() == 0.0));
}

#[test]
fn jumps_appear_in_grid_increments() {
    let c = config(LevyMeasure1D::tempered_stable(1.2, 1.0, 1.0).unwrap(), KernelSpec::exp_ma(1.0).unwrap(), 20.0);
    for seed in 0..10 {
        let st = sample_series(&c, &mut rng_from_seed(path_seed(9, seed))).unwrap();
        assert!(st.len() <= 40);
        let b = build_paths(&st, &c).unwrap();
        for j in 0..st.len() {
            let t = st.time[j];
            if !(t > 0.0 && t <= c.horizon) {
                continue;
            }
            let k = b.grid.iter().position(|&g| g >= t).unwrap();
            let jump = st.size[j] * c.kernel.diag(t, st.label[j]);
            let inc = b.x[k] - b.x[k - 1];
            let bound = 1e-9 * st.size[j].abs() + interference_bound(&st, &b, &c, j);
            assert!((inc - jump).abs() <= bound, "seed {seed} atom {j}: {inc} vs {jump} (bound {bound})");
        }
    }
}

#[test]
fn indicator_kernel_has_compensating_jumps() {
    let c = config(LevyMeasure1D::symmetric_point_mass(1.0, 1.0).unwrap(), KernelSpec::indicator(0.5).unwrap(), 1.0);
    let st = SeriesState { h: c.h(), gamma: vec![0.5], eps: vec![1], time: vec![0.2], label: vec![0], size: vec![1.5], normals: vec![] };
    let b = build_paths(&st, &c).unwrap();
    let jumps = extract_jumps(&st, &c);
    assert_eq!(jumps.len(), 1);
    assert_eq!(jumps[0].size, 1.5);
    let up = b.grid.iter().position(|&g| g >= 0.2).unwrap();
    let down = b.grid.iter().position(|&g| g >= 0.7).unwrap();
    assert_eq!(b.x[up] - b.x[up - 1], 1.5);
    assert_eq!(b.x[down] - b.x[down - 1], -1.5);
    // M only carries the diagonal jump; the drop at 0.7 belongs to A.
    assert_eq!(b.m[down], 1.5);
    assert_eq!(b.a[down] - b.a[down - 1], -1.5);
}

#[test]
fn quadratic_variation_of_m_equals_jump_sum() {
    let c = config(LevyMeasure1D::tempered_stable(1.2, 1.0, 1.0).unwrap(), KernelSpec::exp_ma(1.0).unwrap(), 30.0);
    for seed in 0..5 {
        let st = sample_series(&c, &mut rng_from_seed(path_seed(3, seed))).unwrap();
        let b = build_paths(&st, &c).unwrap();
        let qv = realized_variation(&b, PathComponent::M, 2, 10).unwrap();
        let sum = jump_quadratic_variation(&st, &c);
        assert!((qv - sum).abs() <= 1e-12 * sum.max(1.0), "{qv} vs {sum}");
    }
}

#[test]
fn window_check_rejects_short_past() {
    let mut c = config(LevyMeasure1D::tempered_stable(1.2, 1.0, 1.0).unwrap(), KernelSpec::exp_ma(1.0).unwrap(), 100.0);
    c.max_truncation_ratio = Some(1e-3);
    c.window_past = 2.0;
    assert!(matches!(check_window(&c), Err(SimulationError::WindowTooShort { .. })));
    c.window_past = 10.0;
    assert!(check_window(&c).is_ok());
}

#[test]
fn seeds_are_distinct_and_stable() {
    let a: Vec<u64> = (0..4).map(|i| path_seed(42, i)).collect();
    let b: Vec<u64> = (0..4).map(|i| path_seed(42, i)).collect();
    assert_eq!(a, b);
    for i in 0..4 {
        for j in 0..i {
            assert_ne!(a[i], a[j]);
        }
    }
}
